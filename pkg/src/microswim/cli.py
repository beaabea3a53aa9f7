"""Command-line surface.

Subcommands::

    simulate     run a fixed gait cycle and print the net displacement
    oracle       dump the sign-convention report and cycle rankings as CSV
    train-q      one seeded Q-learning run (transcript + summary CSV)
    train-llm    one prompted episode with a scripted/replay/http backend
    noise-sweep  repeated episodes across noise levels
    ablate       drop one prompt sentence at a time
    nht-sweep    sweep the demonstration-buffer length

Every run writes into ``--out-dir``: transcript JSONL, stats CSV and a
resolved-config snapshot.  Outputs carry no timestamps, so reruns with the
same arguments are byte-identical.  Config files are JSON documents with
optional ``env`` / ``prompt`` / ``qlearning`` sections whose keys mirror
the EnvConfig / PromptConfig / QConfig field names.  Exit codes: 0 ok,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import experiment, oracle
from .backends import (
    HttpBackend,
    HttpBackendConfig,
    ReplayBackend,
    scripted_cycle_backend,
)
from .environment import EnvConfig, Environment, config_dict
from .errors import MicroswimError, UsageError
from .oracle import RFTConfig, calibrate_convention, enumerate_cycles, probe_states, signature_cycle
from .prompting import PromptConfig, default_prompt_config
from .qlearning import QConfig
from .swimmers import MODELS, ModelParams, ng_params, purcell_params


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return data


def _env_config(args, file_cfg: dict) -> EnvConfig:
    section = dict(file_cfg.get("env", {}))
    params = section.pop("params", None)
    if params is not None:
        section["params"] = ModelParams(**params)
    cfg = EnvConfig(**section) if section else EnvConfig()
    updates = {}
    for field, arg in (("model", "model"), ("target_direction", "direction"),
                       ("zeta", "zeta"), ("seed", "seed"),
                       ("initial_state", "initial_state")):
        val = getattr(args, arg, None)
        if val is not None:
            updates[field] = val
    cfg = dataclasses.replace(cfg, **updates)
    if cfg.params is None:
        cfg = dataclasses.replace(
            cfg, params=purcell_params() if cfg.model == "purcell" else ng_params())
    return cfg


def _prompt_config(args, file_cfg: dict, env_cfg: EnvConfig) -> PromptConfig:
    section = dict(file_cfg.get("prompt", {}))
    if "ablation_mask" in section:
        section["ablation_mask"] = frozenset(section["ablation_mask"])
    if "sentences" in section:
        section["sentences"] = tuple(tuple(pair) for pair in section["sentences"])
    if "aliases" in section:
        section["aliases"] = tuple(tuple(pair) for pair in section["aliases"])
    base = default_prompt_config(env_cfg.model, env_cfg.target_direction)
    cfg = dataclasses.replace(base, **section) if section else base
    if getattr(args, "nht", None) is not None:
        cfg = dataclasses.replace(cfg, n_ht=args.nht)
    return cfg


def _q_config(args, file_cfg: dict) -> QConfig:
    section = dict(file_cfg.get("qlearning", {}))
    cfg = QConfig(**section) if section else QConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "max_steps", None) is not None:
        cfg = dataclasses.replace(cfg, max_steps=args.max_steps)
    return cfg


def _snapshot(out_dir: Path, name: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")


def _prompt_cfg_dict(cfg: PromptConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["ablation_mask"] = sorted(cfg.ablation_mask)
    return d


def _rebase_cycle(sig, state_id: int):
    """Rotate a cycle so it is phased from the given boundary shape."""
    if sig.start_id == state_id:
        return sig
    for i, rot_start in enumerate(_rotation_starts(sig)):
        if rot_start == state_id:
            return dataclasses.replace(
                sig, start_id=rot_start, actions=sig.actions[i:] + sig.actions[:i])
    raise UsageError(f"cycle never visits boundary shape {state_id}")


def _make_backend(args, env_cfg: EnvConfig, prompt_cfg: PromptConfig):
    kind = getattr(args, "backend", "scripted")
    if kind == "scripted":
        sig = signature_cycle(env_cfg.model, env_cfg.resolved_params(),
                              env_cfg.target_direction)
        sig = _rebase_cycle(sig, env_cfg.initial_state)
        return lambda _idx, _run: scripted_cycle_backend(sig)
    if kind == "replay":
        if not getattr(args, "recording", None):
            raise UsageError("--recording is required with --backend replay")
        return lambda _idx, _run: ReplayBackend.from_file(args.recording)
    if kind == "http":
        if not getattr(args, "endpoint", None) or not getattr(args, "model_name", None):
            raise UsageError("--endpoint and --model-name are required with --backend http")
        cfg = HttpBackendConfig(base_url=args.endpoint, model=args.model_name)
        return lambda _idx, _run: HttpBackend(cfg)
    raise UsageError(f"unknown backend {kind!r}")


def _rotation_starts(sig):
    from .swimmers import next_shape_id
    starts = []
    sid = sig.start_id
    for a in sig.actions:
        starts.append(sid)
        sid = next_shape_id(sid, a)
    return starts


# ----------------------------------------------------------------------
# Subcommand implementations.

def _cmd_simulate(args) -> int:
    file_cfg = _load_config_file(args.config)
    env_cfg = _env_config(args, file_cfg)
    out_dir = Path(args.out_dir)
    sig = signature_cycle(env_cfg.model, env_cfg.resolved_params(), env_cfg.target_direction)
    if args.initial_state is None:
        env_cfg = dataclasses.replace(env_cfg, initial_state=sig.start_id)
    else:
        sig = _rebase_cycle(sig, env_cfg.initial_state)
    env = Environment(env_cfg)
    for _ in range(args.cycles):
        for a in sig.actions:
            env.step(a)
    transcript = env.transcript
    transcript.write_jsonl(out_dir / "transcript.jsonl")
    experiment.write_csv(out_dir / "stats.csv",
                         ("model", "direction", "cycles", "net_X", "dx_per_cycle"),
                         [(env_cfg.model, env_cfg.target_direction, args.cycles,
                           repr(env.x), repr(sig.dx_per_cycle))])
    _snapshot(out_dir, "config.json", {"env": config_dict(env_cfg),
                                       "cycle": [list(a) for a in sig.actions]})
    print(f"net X after {args.cycles} cycle(s) of the signature gait: {env.x!r} "
          f"(per cycle {sig.dx_per_cycle!r})")
    return 0


def _cmd_oracle(args) -> int:
    out_dir = Path(args.out_dir)
    cfg = RFTConfig(segments_per_link=args.segments)
    report = calibrate_convention(cfg)
    rows = []
    for conv in oracle.CONVENTIONS:
        for i, err in enumerate(report.errors[conv]):
            rows.append((f"{conv[0]:+d},{conv[1]:+d}", i, repr(err),
                         i in report.non_discriminating))
    experiment.write_csv(out_dir / "convention_report.csv",
                         ("convention", "probe", "rel_error", "non_discriminating"), rows)
    probes = probe_states()
    experiment.write_csv(
        out_dir / "probe_states.csv",
        ("probe", "d1", "d2", "dc", "dd1", "dd2"),
        [(i, repr(p.state.d1), repr(p.state.d2), repr(p.state.dc),
          repr(p.rates.dd1), repr(p.rates.dd2)) for i, p in enumerate(probes)])
    for model in MODELS:
        params = purcell_params() if model == "purcell" else ng_params()
        cycles = enumerate_cycles(model, params, max_len=args.max_len,
                                  direction=args.direction)
        experiment.write_csv(
            out_dir / f"cycles_{model}.csv",
            ("rank", "start_id", "actions", "length", "dx_per_cycle"),
            [(r, c.start_id, " ".join(f"{a.dof}:{a.roc:+d}" for a in c.actions),
              len(c.actions), repr(c.dx_per_cycle)) for r, c in enumerate(cycles)])
    print(f"matched convention: {report.convention}; "
          f"max rel error {report.max_error[report.convention]:.3e}")
    return 0


def _cmd_train_q(args) -> int:
    file_cfg = _load_config_file(args.config)
    env_cfg = _env_config(args, file_cfg)
    q_cfg = _q_config(args, file_cfg)
    out_dir = Path(args.out_dir)
    seeds = [q_cfg.seed + i for i in range(args.runs)]
    rows, transcripts = experiment.qlearning_runs(env_cfg, q_cfg, seeds)
    for seed, transcript in zip(seeds, transcripts):
        transcript.write_jsonl(out_dir / f"transcript_seed{seed}.jsonl")
    experiment.write_csv(out_dir / "qlearning_summary.csv",
                         ("seed", "acquisition_step", "X_final"),
                         [(s, a if a is not None else "", repr(x)) for s, a, x in rows])
    _snapshot(out_dir, "config.json",
              {"env": config_dict(env_cfg), "qlearning": dataclasses.asdict(q_cfg)})
    for s, a, x in rows:
        print(f"seed {s}: acquisition_step={a} X_final={x!r}")
    return 0


def _cmd_train_llm(args) -> int:
    file_cfg = _load_config_file(args.config)
    env_cfg = _env_config(args, file_cfg)
    prompt_cfg = _prompt_config(args, file_cfg, env_cfg)
    out_dir = Path(args.out_dir)
    backend_factory = _make_backend(args, env_cfg, prompt_cfg)
    env = Environment(env_cfg)
    from .episode import run_llm_episode
    transcript = run_llm_episode(env, backend_factory(0, 0), prompt_cfg, args.max_steps)
    transcript.write_jsonl(out_dir / "transcript.jsonl")
    sig = signature_cycle(env_cfg.model, env_cfg.resolved_params(), env_cfg.target_direction)
    st = experiment.stats_for(transcript, sig, experiment.SuccessCriterion(), 0, env_cfg.seed)
    experiment.write_csv(out_dir / "stats.csv",
                         ("run_id", "seed", "X_final", "success", "aborted"),
                         [(st.run_id, st.seed, repr(st.x_final), st.success, transcript.aborted)])
    _snapshot(out_dir, "config.json",
              {"env": config_dict(env_cfg), "prompt": _prompt_cfg_dict(prompt_cfg)})
    print(f"X_final={st.x_final!r} success={st.success} aborted={transcript.aborted}")
    return 0


def _write_sweep(out_dir: Path, result, env_cfg, prompt_cfg) -> None:
    experiment.write_csv(out_dir / "runs.csv", result.columns,
                         [row[:-2] + (repr(row[-2]), row[-1]) for row in result.rows])
    experiment.write_csv(out_dir / "summary.csv", result.summary_columns,
                         [row[:-2] + (repr(row[-2]), repr(row[-1])) for row in result.summary])
    for (cond, run_id), transcript in result.transcripts.items():
        safe = str(cond).replace(".", "p").replace("/", "_")
        transcript.write_jsonl(out_dir / f"transcript_{safe}_run{run_id}.jsonl")
    _snapshot(out_dir, "config.json",
              {"env": config_dict(env_cfg), "prompt": _prompt_cfg_dict(prompt_cfg)})


def _cmd_noise_sweep(args) -> int:
    file_cfg = _load_config_file(args.config)
    env_cfg = _env_config(args, file_cfg)
    prompt_cfg = _prompt_config(args, file_cfg, env_cfg)
    levels = [float(x) for x in args.levels.split(",")] if args.levels else []
    backend_factory = _make_backend(args, env_cfg, prompt_cfg)
    result = experiment.noise_sweep(env_cfg, prompt_cfg, backend_factory, levels,
                                    runs_per_level=args.runs, max_steps=args.max_steps,
                                    workers=args.workers)
    _write_sweep(Path(args.out_dir), result, env_cfg, prompt_cfg)
    for row in result.summary:
        print(f"zeta={row[0]}: runs={row[1]} mean_X={row[2]!r} p={row[3]}")
    return 0


def _cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config)
    env_cfg = _env_config(args, file_cfg)
    prompt_cfg = _prompt_config(args, file_cfg, env_cfg)
    if args.sentences is None:
        sentences = list(experiment.SENTENCE_LABELS)
    else:
        sentences = [s.strip() for s in args.sentences.split(",")]
    backend_factory = _make_backend(args, env_cfg, prompt_cfg)
    result = experiment.ablation_study(env_cfg, prompt_cfg, backend_factory,
                                       sentences=sentences, runs=args.runs,
                                       max_steps=args.max_steps, workers=args.workers)
    _write_sweep(Path(args.out_dir), result, env_cfg, prompt_cfg)
    for row in result.summary:
        print(f"omitted={row[0]}: runs={row[1]} mean_X={row[2]!r} p={row[3]}")
    return 0


def _cmd_nht_sweep(args) -> int:
    file_cfg = _load_config_file(args.config)
    env_cfg = _env_config(args, file_cfg)
    prompt_cfg = _prompt_config(args, file_cfg, env_cfg)
    values = [int(x) for x in args.values.split(",")] if args.values else [1, 2, 3, 6]
    backend_factory = _make_backend(args, env_cfg, prompt_cfg)
    result = experiment.nht_sweep(env_cfg, prompt_cfg, backend_factory, values,
                                  runs=args.runs, max_steps=args.max_steps,
                                  workers=args.workers)
    _write_sweep(Path(args.out_dir), result, env_cfg, prompt_cfg)
    for row in result.summary:
        print(f"n_ht={row[0]}: runs={row[1]} mean_X={row[2]!r} p={row[3]}")
    return 0


def _add_common(p: argparse.ArgumentParser, llm: bool = False) -> None:
    p.add_argument("--config", help="JSON config file (env/prompt/qlearning sections)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="runs/latest")
    p.add_argument("--model", choices=MODELS, default=None)
    p.add_argument("--direction", choices=("+x", "-x"), default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--initial-state", dest="initial_state", type=int, default=None)
    if llm:
        p.add_argument("--backend", choices=("scripted", "replay", "http"),
                       default="scripted")
        p.add_argument("--recording", help="JSON list of responses for --backend replay")
        p.add_argument("--endpoint", help="base URL for --backend http")
        p.add_argument("--model-name", dest="model_name", help="model for --backend http")
        p.add_argument("--nht", type=int, default=None, help="history length override")
        p.add_argument("--max-steps", dest="max_steps", type=int, default=50)
        p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microswim",
                                     description="Microswimmer training toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a fixed gait cycle")
    _add_common(p)
    p.add_argument("--cycle", choices=("signature",), default="signature")
    p.add_argument("--cycles", type=int, default=3)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("oracle", help="convention report and cycle rankings")
    p.add_argument("--out-dir", default="runs/latest")
    p.add_argument("--segments", type=int, default=400)
    p.add_argument("--max-len", dest="max_len", type=int, default=4)
    p.add_argument("--direction", choices=("+x", "-x"), default="+x")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("train-q", help="tabular Q-learning runs")
    _add_common(p)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.set_defaults(func=_cmd_train_q)

    p = sub.add_parser("train-llm", help="one prompted episode")
    _add_common(p, llm=True)
    p.set_defaults(func=_cmd_train_llm)

    p = sub.add_parser("noise-sweep", help="episodes across noise levels")
    _add_common(p, llm=True)
    p.add_argument("--levels", default="0,1,2,3")
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=_cmd_noise_sweep)

    p = sub.add_parser("ablate", help="single-sentence prompt ablations")
    _add_common(p, llm=True)
    p.add_argument("--sentences", default=None,
                   help="comma-separated labels, each ablated on its own")
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("nht-sweep", help="sweep history length")
    _add_common(p, llm=True)
    p.add_argument("--values", default="1,2,3,6")
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=_cmd_nht_sweep)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except MicroswimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
