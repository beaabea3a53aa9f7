"""Tabular Q-learning baseline on the four boundary shapes.

The state is the shape alone (both swimmers' dynamics are pose-equivariant,
so four states suffice) and the reward is the per-step displacement signed
toward the target direction, noisy exactly when the environment is.

Defaults matter on this tiny problem: the signature stroke of the
three-sphere swimmer takes two locally losing steps per cycle, so the
discount must look far enough ahead (gamma = 0.9) and the table starts
optimistic (q_init = 0.3) to force systematic exploration.  The null action
is excluded from the learner's menu by default; offering it makes idling
competitive with the stroke at practical discounts.  All values here are
artifact tuning, not published ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import EnvConfig, Environment, Transcript, signed_toward_target
from .errors import ConfigError
from .oracle import GaitCycle, signature_cycle
from .swimmers import (
    Action,
    NULL_ACTION,
    action_from_id,
    action_id,
    boundary_state,
    next_shape_id,
    shape_id,
    valid_actions,
)


@dataclass(frozen=True)
class QConfig:
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.3
    epsilon_decay: float = 0.95
    q_init: float = 0.3
    include_null: bool = False
    seed: int = 0
    max_steps: int = 400

    def validate(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must be in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must be in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        if self.epsilon_decay <= 0.0:
            raise ConfigError("epsilon_decay must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")


@dataclass
class QTable:
    """Q-values keyed by (shape id 0..3, action id)."""

    values: dict[tuple[int, int], float] = field(default_factory=dict)

    def get(self, state_id: int, action: Action) -> float:
        return self.values[(state_id, action_id(action))]

    def set(self, state_id: int, action: Action, value: float) -> None:
        self.values[(state_id, action_id(action))] = value


def legal_actions(state_id: int, model: str, params, include_null: bool) -> tuple[Action, ...]:
    acts = valid_actions(boundary_state(model, params, state_id), model, params)
    if not include_null:
        acts = tuple(a for a in acts if not a.is_null)
    elif NULL_ACTION not in acts:
        acts = acts + (NULL_ACTION,)
    return acts


def init_table(model: str, params, include_null: bool, q_init: float = 0.0) -> QTable:
    table = QTable()
    for sid in range(4):
        for a in legal_actions(sid, model, params, include_null):
            table.set(sid, a, q_init)
    return table


def q_update(table: QTable, state_id: int, action: Action, reward: float,
             next_id: int, next_actions, alpha: float, gamma: float) -> QTable:
    """One-step temporal-difference update toward reward + gamma * max Q."""
    best_next = max(table.get(next_id, a) for a in next_actions)
    old = table.get(state_id, action)
    table.set(state_id, action, old + alpha * (reward + gamma * best_next - old))
    return table


def greedy_action(table: QTable, state_id: int, actions) -> Action:
    """Argmax over legal actions; ties break toward the lowest action id."""
    ordered = sorted(actions, key=action_id)
    best = max(table.get(state_id, a) for a in ordered)
    return next(a for a in ordered if table.get(state_id, a) == best)


def select_action(table: QTable, state_id: int, actions, epsilon: float,
                  rng: np.random.Generator) -> Action:
    """Epsilon-greedy over the legal actions."""
    if rng.uniform() < epsilon:
        ordered = sorted(actions, key=action_id)
        return ordered[rng.integers(len(ordered))]
    return greedy_action(table, state_id, actions)


def greedy_rollout(table: QTable, state_id: int, steps: int, model: str, params,
                   include_null: bool) -> list[Action]:
    """Deterministic shape-space rollout of the greedy policy."""
    seq = []
    for _ in range(steps):
        a = greedy_action(table, state_id, legal_actions(state_id, model, params, include_null))
        seq.append(a)
        state_id = next_shape_id(state_id, a)
    return seq


def cycle_locked(table: QTable, state_id: int, cycle: GaitCycle, model: str,
                 params, include_null: bool, horizon: int = 8) -> bool:
    """True when the greedy policy traverses the cycle for ``horizon`` steps
    from the given shape (any rotation)."""
    seq = greedy_rollout(table, state_id, horizon, model, params, include_null)
    k = len(cycle.actions)
    for rot in cycle.rotations():
        if all(seq[i] == rot[i % k] for i in range(horizon)):
            return True
    return False


@dataclass
class TrainResult:
    table: QTable
    transcript: Transcript
    acquisition_step: int | None


def train(env_cfg: EnvConfig, q_cfg: QConfig = QConfig(),
          signature: GaitCycle | None = None) -> TrainResult:
    """Run epsilon-greedy Q-learning for one episode of env_cfg.max steps.

    ``acquisition_step`` is the first step after which an 8-step greedy
    rollout from the current shape traverses the signature cycle; None if
    that never happens within the budget.
    """
    q_cfg.validate()
    env = Environment(env_cfg)
    if signature is None:
        signature = signature_cycle(env.model, env.params, env_cfg.target_direction)
    table = init_table(env.model, env.params, q_cfg.include_null, q_cfg.q_init)
    rng = np.random.Generator(np.random.PCG64(q_cfg.seed))
    eps = q_cfg.epsilon
    sid = shape_id(env.state, env.model, env.params)
    acquisition = None
    for n in range(1, q_cfg.max_steps + 1):
        acts = legal_actions(sid, env.model, env.params, q_cfg.include_null)
        a = select_action(table, sid, acts, eps, rng)
        rec = env.step(a)
        reward = signed_toward_target(rec.dx_noisy, env_cfg.target_direction)
        nid = shape_id(env.state, env.model, env.params)
        q_update(table, sid, a, reward, nid,
                 legal_actions(nid, env.model, env.params, q_cfg.include_null),
                 q_cfg.alpha, q_cfg.gamma)
        sid = nid
        eps *= q_cfg.epsilon_decay
        if acquisition is None and cycle_locked(table, sid, signature, env.model,
                                                env.params, q_cfg.include_null):
            acquisition = n
    return TrainResult(table=table, transcript=env.transcript, acquisition_step=acquisition)
