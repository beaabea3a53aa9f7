"""Episodic interaction layer: apply actions, add displacement noise, log.

An environment owns one swimmer and a seeded PCG64 generator.  Noise
perturbs only the reported per-step displacement, ``dx * (1 + zeta * Y)``
with ``Y ~ Uniform[-1, 1]``; the geometry always evolves with the clean
dynamics.  The cumulative displacement ``X`` accumulates the noisy values
at full precision; reporting truncates it toward zero to a fixed number of
decimals.

Transcripts serialise as JSON Lines: a header line carrying
``schema_version`` and the resolved config, then one line per step record.
Identical (config, action sequence) pairs reproduce transcripts byte for
byte; the generator algorithm is pinned to PCG64 so this holds across
platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from decimal import Decimal, ROUND_DOWN
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .swimmers import (
    NG,
    PURCELL,
    Action,
    ModelParams,
    NGState,
    PurcellState,
    SwimmerState,
    boundary_state,
    integrate_step,
    ng_params,
    purcell_params,
    valid_actions,
    validate_params,
)

SCHEMA_VERSION = 1

DIRECTIONS = ("+x", "-x")


def truncate_toward_zero(x: float, decimals: int = 3) -> float:
    """Drop digits past ``decimals`` without rounding, e.g. -0.9999 -> -0.999.

    Operates on the shortest decimal representation of the float so that
    already-truncated values pass through unchanged.
    """
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_DOWN))


def signed_toward_target(x: float, direction: str) -> float:
    """Displacement measured along the target direction (larger is better)."""
    return x if direction == "+x" else -x


@dataclass(frozen=True)
class EnvConfig:
    model: str = PURCELL
    params: ModelParams | None = None
    initial_state: int = 0
    target_direction: str = "+x"
    zeta: float = 0.0
    seed: int = 0
    truncation_decimals: int = 3

    def resolved_params(self) -> ModelParams:
        if self.params is not None:
            return self.params
        return purcell_params() if self.model == PURCELL else ng_params()


def validate_config(cfg: EnvConfig) -> None:
    validate_params(cfg.model, cfg.resolved_params())
    if cfg.zeta < 0.0:
        raise ConfigError(f"noise level must be >= 0, got {cfg.zeta}")
    if cfg.target_direction not in DIRECTIONS:
        raise ConfigError(f"target_direction must be one of {DIRECTIONS}")
    if not 0 <= cfg.initial_state <= 3:
        raise ConfigError("initial_state must be an id in 0..3")
    if cfg.truncation_decimals < 0:
        raise ConfigError("truncation_decimals must be >= 0")


@dataclass
class StepRecord:
    n: int
    state_before: SwimmerState
    state_after: SwimmerState
    action: Action
    dx_clean: float
    dx_noisy: float
    X: float  # cumulative displacement after this step, untruncated


@dataclass
class Transcript:
    config: EnvConfig
    records: list[StepRecord] = field(default_factory=list)
    aborted: bool = False

    @property
    def actions(self) -> list[Action]:
        return [r.action for r in self.records]

    def final_x(self) -> float:
        return self.records[-1].X if self.records else 0.0

    def to_jsonl(self) -> str:
        lines = [json.dumps(_header_dict(self), separators=(",", ":"))]
        lines += [json.dumps(_record_dict(r), separators=(",", ":")) for r in self.records]
        return "\n".join(lines) + "\n"

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ConfigError("empty transcript")
        head = json.loads(lines[0])
        if head.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported transcript schema: {head.get('schema_version')!r}")
        cfg = _config_from_dict(head["config"])
        t = cls(config=cfg, aborted=bool(head.get("aborted", False)))
        model = cfg.model
        for ln in lines[1:]:
            d = json.loads(ln)
            t.records.append(StepRecord(
                n=d["n"],
                state_before=_state_from_dict(model, d["state_before"]),
                state_after=_state_from_dict(model, d["state_after"]),
                action=Action(d["action"]["dof"], d["action"]["roc"]),
                dx_clean=d["dx_clean"],
                dx_noisy=d["dx_noisy"],
                X=d["X"],
            ))
        return t

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "Transcript":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def _state_dict(s: SwimmerState) -> dict:
    if isinstance(s, PurcellState):
        return {"d1": s.d1, "d2": s.d2, "dc": s.dc, "rc": [s.rc[0], s.rc[1]]}
    return {"d1": s.d1, "d2": s.d2, "rc": s.rc}


def _state_from_dict(model: str, d: dict) -> SwimmerState:
    if model == PURCELL:
        return PurcellState(d["d1"], d["d2"], d["dc"], (d["rc"][0], d["rc"][1]))
    return NGState(d["d1"], d["d2"], d["rc"])


def _record_dict(r: StepRecord) -> dict:
    return {
        "n": r.n,
        "state_before": _state_dict(r.state_before),
        "state_after": _state_dict(r.state_after),
        "action": {"dof": r.action.dof, "roc": r.action.roc},
        "dx_clean": r.dx_clean,
        "dx_noisy": r.dx_noisy,
        "X": r.X,
    }


def config_dict(cfg: EnvConfig) -> dict:
    p = cfg.resolved_params()
    return {
        "model": cfg.model,
        "params": asdict(p),
        "initial_state": cfg.initial_state,
        "target_direction": cfg.target_direction,
        "zeta": cfg.zeta,
        "seed": cfg.seed,
        "truncation_decimals": cfg.truncation_decimals,
    }


def _config_from_dict(d: dict) -> EnvConfig:
    params = ModelParams(**d["params"]) if d.get("params") else None
    return EnvConfig(
        model=d["model"],
        params=params,
        initial_state=d["initial_state"],
        target_direction=d["target_direction"],
        zeta=d["zeta"],
        seed=d["seed"],
        truncation_decimals=d.get("truncation_decimals", 3),
    )


def _header_dict(t: Transcript) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "aborted": t.aborted,
        "config": config_dict(t.config),
    }


class Environment:
    """Single-owner episodic environment; create one per run."""

    def __init__(self, cfg: EnvConfig):
        validate_config(cfg)
        self.cfg = cfg
        self.params = cfg.resolved_params()
        self.model = cfg.model
        self.reset()

    def reset(self) -> SwimmerState:
        self.state: SwimmerState = boundary_state(self.model, self.params, self.cfg.initial_state)
        self.x = 0.0
        self.n = 0
        self.rng = np.random.Generator(np.random.PCG64(self.cfg.seed))
        self.records: list[StepRecord] = []
        return self.state

    def valid_actions(self) -> tuple[Action, ...]:
        return valid_actions(self.state, self.model, self.params)

    def step(self, action: Action, y: float | None = None) -> StepRecord:
        """Integrate one action; ``y`` overrides the noise draw (test hook).

        The uniform draw happens on every step regardless of zeta so that
        trajectories with different noise levels stay aligned per seed.
        """
        before = self.state
        after, dx_clean = integrate_step(before, action, self.model, self.params)
        draw = self.rng.uniform(-1.0, 1.0)
        y_val = draw if y is None else float(y)
        dx_noisy = dx_clean * (1.0 + self.cfg.zeta * y_val) if self.cfg.zeta > 0.0 else dx_clean
        self.state = after
        self.x += dx_noisy
        self.n += 1
        rec = StepRecord(self.n, before, after, action, dx_clean, dx_noisy, self.x)
        self.records.append(rec)
        return rec

    def reported_displacement(self) -> float:
        """Cumulative X truncated toward zero to the configured decimals."""
        return truncate_toward_zero(self.x, self.cfg.truncation_decimals)

    def reported_progress(self) -> float:
        """Truncated displacement signed along the target direction."""
        return signed_toward_target(self.reported_displacement(), self.cfg.target_direction)

    @property
    def transcript(self) -> Transcript:
        return Transcript(config=self.cfg, records=self.records)


def env_reset(cfg: EnvConfig) -> Environment:
    """Fresh environment at the configured initial state with X = 0."""
    return Environment(cfg)


def replay_transcript(t: Transcript) -> Transcript:
    """Re-run a transcript's actions under its own config.

    With the same seed the reproduced transcript matches the original
    exactly (noise draws included).
    """
    env = Environment(t.config)
    for rec in t.records:
        env.step(rec.action)
    out = env.transcript
    out.aborted = t.aborted
    return out


def iter_jsonl_records(path: str | Path) -> Iterable[dict]:
    """Raw dict view of a transcript file (header excluded)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for ln in lines[1:]:
        if ln.strip():
            yield json.loads(ln)
