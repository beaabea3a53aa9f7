"""Dimensionless hydrodynamic models of two articulated microswimmers.

Two bodies are modelled in the inertialess (Stokes) regime:

* A planar three-link swimmer: three slender rods of unit length joined by
  two hinges.  Its shape is given by the relative joint angles ``d1``
  (tail hinge) and ``d2`` (head hinge); its pose by the middle-link
  orientation ``dc`` and centroid ``rc``.  Lengths are measured in rod
  lengths, angular rates in units of the gear-changing rate, so one action
  step sweeps an angle across ``[-d_max, d_max]`` at rate ±1 and lasts
  ``2*d_max`` time units.
* A collinear three-sphere swimmer: two extensible links of lengths ``d1``
  (front) and ``d2`` (rear) in units of the sphere radius.  One action step
  sweeps a link across ``[d_min, d_max]`` at rate ±1 and lasts
  ``d_max - d_min``.

The three-link translational/rotational velocities are closed-form
trigonometric series obtained from resistive force theory in the slender
limit (drag anisotropy ratio 2); they are stored here as coefficient tables
``(coef, m1, m2)`` for terms ``coef * trig(m1*d1 + m2*d2 [+ dc])``.  The
independent numerical cross-check lives in :mod:`microswim.oracle`.

Sign convention (fixed by oracle calibration, see docs/validation.md):
positive ``d1``/``d2`` bend the tail/head link toward the middle link's
local +y side; the tail link points along ``-e(dc - d1)`` from the joint at
``rc - e(dc)/2`` and the head link along ``+e(dc + d2)`` from the joint at
``rc + e(dc)/2``.

Because neither velocity depends on the centroid, and the rotation rate of
the middle link depends only on the shape, a full action step integrates as
a chain of quadratures.  ``integrate_path`` exploits that to run a classic
fixed-step 4th-order scheme fully vectorised over substeps; it is
algebraically identical to naive RK4 on the coupled system (asserted in the
tests against a straightforward reference loop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import ConfigError, InvalidActionError, SingularConfigurationError

PURCELL = "purcell"
NG = "ng"
MODELS = (PURCELL, NG)

_DELTA_FLOOR = 1e-12


class Action(NamedTuple):
    """One control token: which degree of freedom moves and at what rate.

    ``roc`` is the dimensionless rate of change, one of -1, 0, +1.  The
    null action (``roc == 0``) leaves the shape untouched; its ``dof`` is 0
    by convention.
    """

    dof: int
    roc: int

    @property
    def is_null(self) -> bool:
        return self.roc == 0


NULL_ACTION = Action(0, 0)

# Canonical ordering used for ids, tie-breaking and prompt rendering.
ACTION_ORDER = (Action(1, -1), Action(1, +1), Action(2, -1), Action(2, +1), NULL_ACTION)


def make_action(dof: int, roc: int) -> Action:
    """Build an action, normalising every zero-rate token to NULL_ACTION."""
    if roc == 0:
        return NULL_ACTION
    if dof not in (1, 2) or roc not in (-1, 1):
        raise InvalidActionError(f"no such action: dof={dof}, roc={roc}")
    return Action(dof, roc)


def action_id(a: Action) -> int:
    a = NULL_ACTION if a.is_null else a
    try:
        return ACTION_ORDER.index(a)
    except ValueError:
        raise InvalidActionError(f"unknown action {a!r}") from None


def action_from_id(i: int) -> Action:
    return ACTION_ORDER[i]


class RateVector(NamedTuple):
    """Rates of change of the two degrees of freedom.

    Discrete actions use entries from {-1, 0, +1} with at most one nonzero;
    oracle queries may use any reals.
    """

    dd1: float
    dd2: float


@dataclass(frozen=True)
class PurcellState:
    """Configuration of the three-link swimmer.

    ``dc`` is stored unwrapped so accumulated rotation stays measurable;
    ``rc`` is the middle-link centroid in rod lengths.
    """

    d1: float
    d2: float
    dc: float = 0.0
    rc: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class NGState:
    """Configuration of the three-sphere swimmer (axial centroid ``rc``)."""

    d1: float
    d2: float
    rc: float = 0.0


SwimmerState = Union[PurcellState, NGState]


@dataclass(frozen=True)
class ModelParams:
    """Stroke bounds and integration resolution.

    ``d_min`` is only meaningful for the three-sphere swimmer.  ``substeps``
    is the number of RK4 substeps per action step.  ``allow_null`` controls
    whether the null action is offered to controllers; the integrator always
    accepts it as a no-op.
    """

    d_max: float
    d_min: float | None = None
    substeps: int = 200
    allow_null: bool = True


def purcell_params(d_max: float = math.pi / 6, substeps: int = 200,
                   allow_null: bool = True) -> ModelParams:
    return ModelParams(d_max=d_max, d_min=None, substeps=substeps, allow_null=allow_null)


def ng_params(d_min: float = 8.0, d_max: float = 10.0, substeps: int = 200,
              allow_null: bool = True) -> ModelParams:
    return ModelParams(d_max=d_max, d_min=d_min, substeps=substeps, allow_null=allow_null)


def validate_params(model: str, p: ModelParams) -> None:
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")
    if p.substeps < 1:
        raise ConfigError("substeps must be a positive integer")
    if model == PURCELL:
        # d_max beyond pi/3 lets the closed-form denominator reach zero.
        if not 0.0 < p.d_max <= math.pi / 3:
            raise ConfigError("three-link swimmer needs 0 < d_max <= pi/3")
    else:
        if p.d_min is None or not 0.0 < p.d_min < p.d_max:
            raise ConfigError("three-sphere swimmer needs 0 < d_min < d_max")


def dof_bounds(model: str, p: ModelParams) -> tuple[float, float]:
    """(low, high) extreme values either degree of freedom can sit at."""
    if model == PURCELL:
        return (-p.d_max, p.d_max)
    return (p.d_min, p.d_max)


def step_duration(model: str, p: ModelParams) -> float:
    return 2.0 * p.d_max if model == PURCELL else p.d_max - p.d_min


# The four boundary shapes, in two-bit Gray-code order over (d1, d2) levels.
GRAY_LEVELS = ((0, 0), (0, 1), (1, 1), (1, 0))


def boundary_state(model: str, p: ModelParams, state_id: int) -> SwimmerState:
    if not 0 <= state_id <= 3:
        raise ConfigError("initial state id must be in 0..3")
    lo, hi = dof_bounds(model, p)
    l1, l2 = GRAY_LEVELS[state_id]
    d1 = hi if l1 else lo
    d2 = hi if l2 else lo
    return PurcellState(d1, d2) if model == PURCELL else NGState(d1, d2)


def shape_levels(state: SwimmerState, model: str, p: ModelParams) -> tuple[int, int]:
    """Map the boundary DOF values to integer levels (0=low, 1=high)."""
    lo, hi = dof_bounds(model, p)
    levels = []
    for d in (state.d1, state.d2):
        if d == lo:
            levels.append(0)
        elif d == hi:
            levels.append(1)
        else:
            raise InvalidActionError(f"DOF value {d!r} is not at an action boundary")
    return tuple(levels)


def shape_id(state: SwimmerState, model: str, p: ModelParams) -> int:
    return GRAY_LEVELS.index(shape_levels(state, model, p))


def next_shape_id(state_id: int, action: Action) -> int:
    """Shape transition in level space; pure bookkeeping, no dynamics."""
    if action.is_null:
        return state_id
    l1, l2 = GRAY_LEVELS[state_id]
    levels = [l1, l2]
    i = action.dof - 1
    new = levels[i] + action.roc
    if new not in (0, 1):
        raise InvalidActionError(f"action {action} leaves the level range from state {state_id}")
    levels[i] = new
    return GRAY_LEVELS.index(tuple(levels))


def valid_actions(state: SwimmerState, model: str, p: ModelParams) -> tuple[Action, ...]:
    """Actions that keep both DOFs inside their bounds, one DOF per action.

    The state must sit at an action boundary (every DOF at an extreme).
    Returned in canonical id order; the null action is appended when
    ``p.allow_null``.
    """
    l1, l2 = shape_levels(state, model, p)
    acts = []
    for dof, level in ((1, l1), (2, l2)):
        acts.append(Action(dof, +1 if level == 0 else -1))
    if p.allow_null:
        acts.append(NULL_ACTION)
    return tuple(sorted(acts, key=action_id))


# ----------------------------------------------------------------------
# Closed-form three-link velocities: coefficient tables (coef, m1, m2).
# u and v share the same tables (sine vs cosine of arg + dc); the rotation
# rate and the denominator use cosine series without dc.

_U1_TERMS = np.array([
    (262, -1, 0), (-26, 1, 0), (-2, 2, 0), (18, -2, 0), (-16, 0, -1),
    (78, -1, -1), (-18, 1, -1), (8, -2, -1), (104, 0, 1), (126, -1, 1),
    (30, 1, 1), (24, 0, 2), (21, -1, 2), (1, 1, 2), (-2, 2, 2),
    (-4, 0, -2), (9, -1, -2), (-3, 1, -2), (2, -2, -2), (36, 0, 0),
], dtype=float)

_U2_TERMS = np.array([
    (104, -1, 0), (-16, 1, 0), (-4, 2, 0), (24, -2, 0), (-26, 0, -1),
    (30, -1, -1), (-18, 1, -1), (-3, 2, -1), (1, -2, -1), (262, 0, 1),
    (126, -1, 1), (78, 1, 1), (9, 2, 1), (21, -2, 1), (18, 0, 2),
    (8, 1, 2), (2, 2, 2), (-2, 0, -2), (-2, -2, -2), (36, 0, 0),
], dtype=float)

_ROT1_TERMS = np.array([
    (102, 1, 0), (2, 2, 0), (-6, 1, -1), (-4, 0, 2), (42, 1, 1),
    (2, 2, 2), (9, 1, 2), (-3, 1, -2), (108, 0, 0),
], dtype=float)

_ROT2_TERMS = np.array([
    (4, 2, 0), (6, 1, -1), (3, 2, -1), (-102, 0, 1), (-2, 0, 2),
    (-42, 1, 1), (-2, 2, 2), (-9, 2, 1), (-108, 0, 0),
], dtype=float)

_DELTA_TERMS = np.array([
    (136, 1, 0), (14, 2, 0), (-8, 1, -1), (-1, 2, -2), (-4, 2, -1),
    (14, 0, 2), (56, 1, 1), (136, 0, 1), (3, 2, 2), (12, 2, 1),
    (12, 1, 2), (-4, 1, -2), (282, 0, 0),
], dtype=float)


def _shape_phases(terms: np.ndarray, d1, d2) -> np.ndarray:
    return (np.multiply.outer(np.asarray(d1, float), terms[:, 1])
            + np.multiply.outer(np.asarray(d2, float), terms[:, 2]))


def _cos_series(terms: np.ndarray, d1, d2) -> np.ndarray:
    return np.cos(_shape_phases(terms, d1, d2)) @ terms[:, 0]


def _complex_series(terms: np.ndarray, d1, d2) -> np.ndarray:
    # sum_j c_j * exp(i * (m1_j d1 + m2_j d2)); multiplying by exp(i*dc)
    # afterwards gives the full phase, so dc never enters the heavy sums.
    return np.exp(1j * _shape_phases(terms, d1, d2)) @ terms[:, 0]


def purcell_delta(d1, d2):
    """Denominator of the three-link velocity formulas.

    Accepts scalars or broadcastable arrays; strictly positive on the whole
    stroke domain for the default amplitude.
    """
    out = 3.0 * _cos_series(_DELTA_TERMS, d1, d2)
    return float(out) if np.ndim(out) == 0 else out


def _rotation_rate(d1, d2, dd1, dd2, den):
    g1 = _cos_series(_ROT1_TERMS, d1, d2)
    g2 = _cos_series(_ROT2_TERMS, d1, d2)
    return 2.0 * (np.asarray(dd1) * g1 + np.asarray(dd2) * g2) / den


def _translation(sum1: np.ndarray, sum2: np.ndarray, dc, dd1, dd2, den):
    """(u, v) from precomputed complex shape sums and the orientation."""
    w = (np.asarray(dd1) * sum1 + np.asarray(dd2) * sum2) * np.exp(1j * np.asarray(dc))
    return w.imag / (2.0 * den), -w.real / (2.0 * den)


def purcell_velocity(state: PurcellState, rates: RateVector) -> tuple[float, float, float]:
    """Instantaneous (u, v, ddc) of the three-link swimmer.

    u, v are the middle-link centroid velocity components, ddc its rotation
    rate; all linear in the joint rates.
    """
    den = purcell_delta(state.d1, state.d2)
    if abs(den) < _DELTA_FLOOR:
        raise SingularConfigurationError(
            f"velocity denominator ~0 at d1={state.d1}, d2={state.d2}")
    s1 = _complex_series(_U1_TERMS, state.d1, state.d2)
    s2 = _complex_series(_U2_TERMS, state.d1, state.d2)
    u, v = _translation(s1, s2, state.dc, rates.dd1, rates.dd2, den)
    ddc = _rotation_rate(state.d1, state.d2, rates.dd1, rates.dd2, den)
    return float(u), float(v), float(ddc)


def ng_velocity(d1: float, d2: float, rates: RateVector) -> float:
    """Axial centroid velocity of the three-sphere swimmer.

    ``(1/6) * [ (dd2 - dd1)/(d1 + d2) + 2*(dd1/d2 - dd2/d1) ]`` in the
    small-deformation regime (link lengths large compared with the sphere
    radius).  Independent of the centroid position.
    """
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValueError(f"link lengths must be positive, got d1={d1}, d2={d2}")
    return _ng_velocity_arrays(d1, d2, rates.dd1, rates.dd2)


def _ng_velocity_arrays(d1, d2, dd1, dd2):
    d1 = np.asarray(d1, float)
    d2 = np.asarray(d2, float)
    out = ((np.asarray(dd2) - np.asarray(dd1)) / (d1 + d2)
           + 2.0 * (np.asarray(dd1) / d2 - np.asarray(dd2) / d1)) / 6.0
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------
# Step integration.

def _plan_steps(state: SwimmerState, actions: Sequence[Action], model: str,
                p: ModelParams):
    """Validate the action chain and lay out each step's shape sweep.

    Returns per-step tuples (action, start_values, rates, end_values) with
    end values snapped exactly onto the boundary set.
    """
    lo, hi = dof_bounds(model, p)
    cur = [state.d1, state.d2]
    for d in cur:
        if d not in (lo, hi):
            raise InvalidActionError(f"DOF value {d!r} is not at an action boundary")
    plan = []
    for a in actions:
        if a.is_null:
            plan.append((NULL_ACTION, tuple(cur), (0.0, 0.0), tuple(cur)))
            continue
        if a.dof not in (1, 2) or a.roc not in (-1, 1):
            raise InvalidActionError(f"no such action: {a!r}")
        i = a.dof - 1
        target = hi if a.roc > 0 else lo
        if cur[i] == target:
            raise InvalidActionError(
                f"action {a} would push DOF {a.dof} past its bound from {cur[i]!r}")
        start = tuple(cur)
        rates = (float(a.roc), 0.0) if i == 0 else (0.0, float(a.roc))
        cur[i] = target
        plan.append((a, start, rates, tuple(cur)))
    return plan


def _sweep_arrays(plan, duration: float, n: int):
    """Shape values at substep nodes (k, n+1) and midpoints (k, n)."""
    k = len(plan)
    t_nodes = np.linspace(0.0, duration, n + 1)
    t_mids = 0.5 * (t_nodes[:-1] + t_nodes[1:])
    d1n = np.empty((k, n + 1))
    d2n = np.empty((k, n + 1))
    d1m = np.empty((k, n))
    d2m = np.empty((k, n))
    dd1 = np.empty((k, 1))
    dd2 = np.empty((k, 1))
    for j, (_a, (s1, s2), (r1, r2), _end) in enumerate(plan):
        d1n[j] = s1 + r1 * t_nodes
        d2n[j] = s2 + r2 * t_nodes
        d1m[j] = s1 + r1 * t_mids
        d2m[j] = s2 + r2 * t_mids
        dd1[j, 0] = r1
        dd2[j, 0] = r2
    return d1n, d2n, d1m, d2m, dd1, dd2


def _integrate_purcell(state: PurcellState, plan, p: ModelParams):
    n = p.substeps
    h = step_duration(PURCELL, p) / n
    d1n, d2n, d1m, d2m, dd1, dd2 = _sweep_arrays(plan, step_duration(PURCELL, p), n)

    den_n = 3.0 * _cos_series(_DELTA_TERMS, d1n, d2n)
    den_m = 3.0 * _cos_series(_DELTA_TERMS, d1m, d2m)
    if min(np.abs(den_n).min(), np.abs(den_m).min()) < _DELTA_FLOOR:
        raise SingularConfigurationError("velocity denominator ~0 along the sweep")

    g_n = _rotation_rate(d1n, d2n, dd1, dd2, den_n)     # (k, n+1)
    g_m = _rotation_rate(d1m, d2m, dd1, dd2, den_m)     # (k, n)

    # Orientation: the rotation rate is independent of dc, so its RK4
    # update collapses to a Simpson rule and a running sum.
    inc = (h / 6.0) * (g_n[:, :-1] + 4.0 * g_m + g_n[:, 1:])
    dc_flat = state.dc + np.concatenate(([0.0], np.cumsum(inc.ravel())))
    dc_n = dc_flat[:-1].reshape(g_m.shape)              # dc at node i of step j

    # Stage orientations of classic RK4 (stages 2 and 3 share the midpoint
    # rotation rate, so k2dc == k3dc).
    a1 = dc_n
    a2 = dc_n + (0.5 * h) * g_n[:, :-1]
    a3 = dc_n + (0.5 * h) * g_m
    a4 = dc_n + h * g_m

    s1_n = _complex_series(_U1_TERMS, d1n, d2n)
    s2_n = _complex_series(_U2_TERMS, d1n, d2n)
    s1_m = _complex_series(_U1_TERMS, d1m, d2m)
    s2_m = _complex_series(_U2_TERMS, d1m, d2m)

    u1, v1 = _translation(s1_n[:, :-1], s2_n[:, :-1], a1, dd1, dd2, den_n[:, :-1])
    u2, v2 = _translation(s1_m, s2_m, a2, dd1, dd2, den_m)
    u3, v3 = _translation(s1_m, s2_m, a3, dd1, dd2, den_m)
    u4, v4 = _translation(s1_n[:, 1:], s2_n[:, 1:], a4, dd1, dd2, den_n[:, 1:])

    dx_steps = ((h / 6.0) * (u1 + 2.0 * u2 + 2.0 * u3 + u4)).sum(axis=1)
    dy_steps = ((h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)).sum(axis=1)
    dc_steps = dc_flat[n::n]                            # dc at each step boundary

    states = []
    rx, ry = state.rc
    for j, (_a, _start, _rates, end) in enumerate(plan):
        rx += dx_steps[j]
        ry += dy_steps[j]
        states.append(PurcellState(end[0], end[1], float(dc_steps[j]), (rx, ry)))
    return states, [float(d) for d in dx_steps]


def _integrate_ng(state: NGState, plan, p: ModelParams):
    n = p.substeps
    h = step_duration(NG, p) / n
    d1n, d2n, d1m, d2m, dd1, dd2 = _sweep_arrays(plan, step_duration(NG, p), n)
    f_n = _ng_velocity_arrays(d1n, d2n, dd1, dd2)
    f_m = _ng_velocity_arrays(d1m, d2m, dd1, dd2)
    dx_steps = ((h / 6.0) * (f_n[:, :-1] + 4.0 * f_m + f_n[:, 1:])).sum(axis=1)

    states = []
    rc = state.rc
    for j, (_a, _start, _rates, end) in enumerate(plan):
        rc += dx_steps[j]
        states.append(NGState(end[0], end[1], float(rc)))
    return states, [float(d) for d in dx_steps]


def integrate_path(state: SwimmerState, actions: Sequence[Action], model: str,
                   p: ModelParams) -> tuple[list[SwimmerState], list[float]]:
    """Apply a chain of actions, returning the state after each step and the
    per-step centroid displacements along x.

    Each non-null step sweeps its DOF linearly at rate ±1 over the full step
    duration; endpoints are snapped exactly onto the boundary set.  Null
    steps are no-ops.  Raises InvalidActionError if any action would leave
    the bounds.
    """
    validate_params(model, p)
    plan = _plan_steps(state, actions, model, p)
    moving = [entry for entry in plan if not entry[0].is_null]
    if moving:
        if model == PURCELL:
            mstates, mdxs = _integrate_purcell(state, moving, p)
        else:
            mstates, mdxs = _integrate_ng(state, moving, p)
    else:
        mstates, mdxs = [], []

    states: list[SwimmerState] = []
    dxs: list[float] = []
    cur = state
    it = iter(zip(mstates, mdxs))
    for a, *_ in plan:
        if a.is_null:
            states.append(cur)
            dxs.append(0.0)
        else:
            cur, dx = next(it)
            states.append(cur)
            dxs.append(dx)
    return states, dxs


def integrate_step(state: SwimmerState, action: Action, model: str,
                   p: ModelParams) -> tuple[SwimmerState, float]:
    """One action step; see integrate_path."""
    states, dxs = integrate_path(state, [action], model, p)
    return states[0], dxs[0]
