"""Batch experiment harness: success detection, sweeps, statistics, CSV.

Success follows the stroke-acquisition criterion: the transcript must
contain the configured number of consecutive signature-cycle traversals
(any rotation) starting within the step budget, and — unless disabled —
every later step must keep following the cycle through the end of the
transcript.  Sweeps run seeded, independent episodes on a bounded worker
pool and aggregate mean displacement and success rate; aborted episodes
count as failures rather than being dropped.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .environment import EnvConfig, Environment, Transcript, signed_toward_target, truncate_toward_zero
from .episode import run_llm_episode
from .errors import UsageError
from .oracle import GaitCycle, signature_cycle
from .prompting import SENTENCE_LABELS, PromptConfig, ablated
from .qlearning import QConfig, train


@dataclass(frozen=True)
class SuccessCriterion:
    cycles_required: int = 3
    step_budget: int = 50
    no_subsequent_failure: bool = True


@dataclass(frozen=True)
class RunStats:
    run_id: int
    seed: int
    x_final: float
    success: bool


def detect_success(transcript: Transcript, signature: GaitCycle,
                   criterion: SuccessCriterion = SuccessCriterion()) -> bool:
    """Did the controller acquire and keep the signature stroke?"""
    if transcript.aborted:
        return False
    actions = transcript.actions
    n = len(actions)
    cycle_len = len(signature.actions)
    need = criterion.cycles_required * cycle_len
    rotations = signature.rotations()
    for start in range(min(criterion.step_budget, n)):
        if start + need > n:
            break
        span = n - start if criterion.no_subsequent_failure else need
        for rot in rotations:
            if all(actions[start + j] == rot[j % cycle_len] for j in range(span)):
                return True
    return False


def final_progress(transcript: Transcript) -> float:
    """Truncated final displacement signed toward the configured target."""
    x = truncate_toward_zero(transcript.final_x(),
                             transcript.config.truncation_decimals)
    return signed_toward_target(x, transcript.config.target_direction)


def stats_for(transcript: Transcript, signature: GaitCycle,
              criterion: SuccessCriterion, run_id: int, seed: int) -> RunStats:
    return RunStats(run_id=run_id, seed=seed, x_final=final_progress(transcript),
                    success=detect_success(transcript, signature, criterion))


BackendFactory = Callable[[int, int], object]  # (condition_index, run_id) -> backend


@dataclass
class SweepResult:
    """Per-run rows plus per-condition aggregates; both CSV-ready."""

    columns: tuple[str, ...]
    rows: list[tuple]
    summary_columns: tuple[str, ...]
    summary: list[tuple]
    transcripts: dict[tuple, Transcript]


def _aggregate(rows: list[tuple], key_idx: int = 0) -> list[tuple]:
    by_key: dict = {}
    for row in rows:  # rows arrive grouped by condition; keep that order
        by_key.setdefault(row[key_idx], []).append(row)
    out = []
    for key, grp in by_key.items():
        mean_x = sum(r[-2] for r in grp) / len(grp)
        p = sum(1 for r in grp if r[-1]) / len(grp)
        out.append((key, len(grp), mean_x, p))
    return out


def _run_condition_sweep(base_cfg: EnvConfig, conditions: Sequence[tuple],
                         make_env_cfg, make_prompt_cfg,
                         backend_factory: BackendFactory, runs: int,
                         criterion: SuccessCriterion, signature: GaitCycle | None,
                         max_steps: int, workers: int, label: str) -> SweepResult:
    if signature is None:
        signature = signature_cycle(base_cfg.model, base_cfg.resolved_params(),
                                    base_cfg.target_direction)

    def one(idx_cond_run):
        idx, cond, run_id = idx_cond_run
        seed = base_cfg.seed + 10_000 * idx + run_id
        env_cfg = replace(make_env_cfg(cond), seed=seed)
        env = Environment(env_cfg)
        backend = backend_factory(idx, run_id)
        transcript = run_llm_episode(env, backend, make_prompt_cfg(cond), max_steps)
        st = stats_for(transcript, signature, criterion, run_id, seed)
        return (idx, run_id), (cond, run_id, seed, st.x_final, st.success), transcript

    jobs = [(idx, cond, run_id)
            for idx, cond in enumerate(conditions) for run_id in range(runs)]
    results = {}
    transcripts = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for key, row, transcript in pool.map(one, jobs):
                results[key] = row
                transcripts[key] = transcript
    else:
        for job in jobs:
            key, row, transcript = one(job)
            results[key] = row
            transcripts[key] = transcript
    ordered_keys = sorted(results)
    rows = [results[k] for k in ordered_keys]
    transcripts = {results[k][:2]: transcripts[k] for k in ordered_keys}
    return SweepResult(
        columns=(label, "run_id", "seed", "X_final", "success"),
        rows=rows,
        summary_columns=(label, "runs", "mean_X", "p"),
        summary=_aggregate(rows),
        transcripts=transcripts,
    )


def noise_sweep(base_cfg: EnvConfig, prompt_cfg: PromptConfig,
                backend_factory: BackendFactory, levels: Iterable[float],
                runs_per_level: int = 10,
                criterion: SuccessCriterion = SuccessCriterion(),
                signature: GaitCycle | None = None, max_steps: int = 50,
                workers: int = 1) -> SweepResult:
    """Success and mean displacement across noise levels."""
    levels = [float(z) for z in levels]
    return _run_condition_sweep(
        base_cfg, levels,
        make_env_cfg=lambda zeta: replace(base_cfg, zeta=zeta),
        make_prompt_cfg=lambda _zeta: prompt_cfg,
        backend_factory=backend_factory, runs=runs_per_level,
        criterion=criterion, signature=signature, max_steps=max_steps,
        workers=workers, label="zeta")


def ablation_study(base_cfg: EnvConfig, prompt_cfg: PromptConfig,
                   backend_factory: BackendFactory,
                   sentences: Sequence[str] = SENTENCE_LABELS, runs: int = 10,
                   criterion: SuccessCriterion = SuccessCriterion(),
                   signature: GaitCycle | None = None, max_steps: int = 50,
                   workers: int = 1) -> SweepResult:
    """Drop one sentence at a time (plus a full-prompt control row)."""
    for s in sentences:
        if not isinstance(s, str) or s not in SENTENCE_LABELS:
            raise UsageError(
                f"ablation removes one sentence at a time; got {s!r} "
                f"(valid labels: {', '.join(SENTENCE_LABELS)})")
    if prompt_cfg.ablation_mask:
        raise UsageError("pass a full prompt config; the study applies the masks")
    conditions = ["none"] + list(dict.fromkeys(sentences))
    return _run_condition_sweep(
        base_cfg, conditions,
        make_env_cfg=lambda _c: base_cfg,
        make_prompt_cfg=lambda c: prompt_cfg if c == "none" else ablated(prompt_cfg, {c}),
        backend_factory=backend_factory, runs=runs,
        criterion=criterion, signature=signature, max_steps=max_steps,
        workers=workers, label="omitted_sentence")


def nht_sweep(base_cfg: EnvConfig, prompt_cfg: PromptConfig,
              backend_factory: BackendFactory, values: Sequence[int],
              runs: int = 10, criterion: SuccessCriterion = SuccessCriterion(),
              signature: GaitCycle | None = None, max_steps: int = 50,
              workers: int = 1) -> SweepResult:
    """Sweep the demonstration-buffer length."""
    vals = [int(v) for v in values]
    if any(v < 0 for v in vals):
        raise UsageError("n_ht values must be >= 0")
    return _run_condition_sweep(
        base_cfg, vals,
        make_env_cfg=lambda _v: base_cfg,
        make_prompt_cfg=lambda v: replace(prompt_cfg, n_ht=v),
        backend_factory=backend_factory, runs=runs,
        criterion=criterion, signature=signature, max_steps=max_steps,
        workers=workers, label="n_ht")


def qlearning_runs(base_cfg: EnvConfig, q_cfg: QConfig, seeds: Sequence[int],
                   signature: GaitCycle | None = None):
    """Seeded training runs; returns (rows, transcripts) for CSV/JSONL."""
    rows = []
    transcripts = []
    for seed in seeds:
        res = train(replace(base_cfg, seed=seed), replace(q_cfg, seed=seed), signature)
        rows.append((seed, res.acquisition_step, final_progress(res.transcript)))
        transcripts.append(res.transcript)
    return rows, transcripts


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow(list(row))
