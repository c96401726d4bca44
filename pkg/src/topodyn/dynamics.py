"""Vector field, frozen-map stepping and trajectory integration.

Each step freezes the interaction map at the step's start, so inside a
step the field is affine and every stage sees the same neighbours.  This
is the right-derivative (semi-classical) reading of a switching system:
at a switching instant the solution leaves along the field of the state
it is in.

When the map at the end of a step differs from the one at its start, the
step is retried at half the size, down to ``step / 2**10``.  At the floor
the switch is accepted at the step boundary and logged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .topology import OpinionState, compute_neighbors, stable_order

log = logging.getLogger(__name__)

CONVERGED = "converged"
HORIZON = "horizon_reached"

_METHODS = {"rk4": kernels.METHOD_RK4, "euler": kernels.METHOD_EULER}


class StepRejected(RuntimeError):
    """A step would have inverted the order of two agents."""


class IntegrationFailure(RuntimeError):
    """Step rejection persisted at the minimum step size."""

    def __init__(self, message, t, state, trajectory=None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.trajectory = trajectory


@dataclass(frozen=True)
class SimConfig:
    step: float = 1e-3
    t_max: float = 100.0
    conv_tol: float = 1e-9
    stall_window: float = 1.0
    record_every: float = 0.01
    method: str = "rk4"

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not self.conv_tol > 0:
            raise ValueError("conv_tol must be positive")
        if not self.stall_window >= 0:
            raise ValueError("stall_window must be non-negative")
        if not self.record_every > 0:
            raise ValueError("record_every must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {sorted(_METHODS)}")

    @property
    def h_min(self) -> float:
        return self.step / 2**kernels.REFINE_LEVELS


@dataclass(frozen=True)
class SwitchEvent:
    t: float
    agent: int
    before: tuple
    after: tuple


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    events: list
    status: str
    k: int
    radius: float | None = None
    config: SimConfig = field(default_factory=SimConfig)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> OpinionState:
        return OpinionState.from_values(self.values[-1], self.k)

    @property
    def initial(self) -> OpinionState:
        return OpinionState.from_values(self.values[0], self.k)

    @property
    def samples(self):
        return [(float(t), OpinionState.from_values(v, self.k)) for t, v in zip(self.times, self.values)]

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _model_args(state, radius):
    if radius is None:
        return kernels.MODEL_KNN, state.k, 0.0
    if not radius > 0:
        raise ValueError("interaction radius must be positive")
    return kernels.MODEL_METRIC, state.k, float(radius)


def _exact_field(x, rows):
    out = np.empty(len(x), dtype=object)
    for i, row in enumerate(rows):
        acc = 0
        for j in sorted(row):
            acc += x[j] - x[i]
        out[i] = acc
    return out


def rhs(state: OpinionState, radius: float | None = None) -> np.ndarray:
    """Right-hand side ``sum over neighbours of (x_l - x_i)``.

    With ``radius`` set, neighbours are every agent strictly within that
    distance instead of the k nearest.  Exact (rational) states are
    evaluated in exact arithmetic.
    """
    model, k, d = _model_args(state, radius)
    x = state.x
    if state.exact:
        if model == kernels.MODEL_KNN:
            rows = compute_neighbors(state).neighbors.tolist()
        else:
            rows = [[j for j in range(state.n) if j != i and abs(x[j] - x[i]) < d] for i in range(state.n)]
        return _exact_field(x, rows)
    nbr, deg = kernels.interaction_table(x, model, k, d)
    return kernels.field(x, nbr, deg)


def pairwise_derivative(state: OpinionState, i: int, j: int):
    """d/dt (x_i - x_j) written through shared and private neighbours."""
    if i == j:
        raise ValueError("need two distinct agents")
    nm = compute_neighbors(state)
    x = state.x
    ni, nj = set(nm[i].tolist()), set(nm[j].tolist())
    own_i = sum((x[l] - x[i] for l in sorted(ni - nj)), 0)
    own_j = sum((x[m] - x[j] for m in sorted(nj - ni)), 0)
    return own_i - own_j - len(ni & nj) * (x[i] - x[j])


def canonicalize(state: OpinionState):
    """Sort agents by (opinion, index).

    Returns the sorted state and ``sigma`` with ``sigma[i]`` the new
    position of agent ``i``.
    """
    order = stable_order(state.x)
    sigma = np.empty_like(order)
    sigma[order] = np.arange(state.n)
    return state.with_values(state.x[order]), sigma


def _rk_step(x, nbr, deg, h, method):
    f = kernels.field
    k1 = f(x, nbr, deg)
    if method == kernels.METHOD_EULER:
        return x + h * k1
    half = 0.5 * h
    k2 = f(x + half * k1, nbr, deg)
    k3 = f(x + half * k2, nbr, deg)
    k4 = f(x + h * k3, nbr, deg)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state: OpinionState, h: float, method: str = "rk4", radius: float | None = None) -> OpinionState:
    """One explicit step with the interaction map frozen at ``state``."""
    if not h > 0:
        raise ValueError("h must be positive")
    model, k, d = _model_args(state, radius)
    x = np.array(state.x, dtype=np.float64)
    nbr, deg = kernels.interaction_table(x, model, k, d)
    y = _rk_step(x, nbr, deg, h, _METHODS[method])
    order = stable_order(x)
    strict = x[order[1:]] > x[order[:-1]]
    gaps = y[order[1:]] - y[order[:-1]]
    bad = np.flatnonzero(strict & (gaps < -kernels.ORDER_SLACK))
    if bad.size:
        a = bad[0]
        raise StepRejected(
            f"agents {order[a]} and {order[a + 1]} would swap order (gap {gaps[a]:.3e}) with h={h:g}"
        )
    return state.with_values(y)


def _ordered_lists(x, model, k, d):
    if model == kernels.MODEL_KNN:
        return [tuple(r) for r in kernels.knn_table(x, k).tolist()]
    nbr, deg = kernels.interaction_table(x, model, k, d)
    return [tuple(nbr[i, : deg[i]].tolist()) for i in range(len(x))]


def integrate(state0: OpinionState, cfg: SimConfig | None = None, radius: float | None = None) -> Trajectory:
    """Integrate from t=0 until convergence or ``cfg.t_max``.

    Convergence needs ``max|F| < conv_tol`` with no switch during the last
    ``stall_window`` time units.  Raises ``IntegrationFailure`` when the
    order guard still trips at the minimum step size.
    """
    cfg = cfg or SimConfig()
    model, k, d = _model_args(state0, radius)
    method = _METHODS[cfg.method]
    x = np.array(state0.x, dtype=np.float64)
    n = x.shape[0]
    perm = stable_order(x)
    nbr, deg = kernels.interaction_table(x, model, k, d)
    x_prev = np.empty_like(x)

    times = [0.0]
    values = [x.copy()]
    events: list[SwitchEvent] = []
    t = 0.0
    t_last_switch = 0.0
    n_rec = 1
    status = None
    while status is None:
        t_stop = min(n_rec * cfg.record_every, cfg.t_max)
        nbr_before = nbr.copy()
        deg_before = deg.copy()
        code, t = kernels.advance(
            x, perm, nbr, deg, x_prev, t, t_stop, cfg.step, cfg.h_min, model, k, d,
            method, cfg.conv_tol, t_last_switch, cfg.stall_window,
        )
        if code == kernels.SWITCH:
            t_last_switch = t
            before = _ordered_lists(x_prev, model, k, d)
            after = _ordered_lists(x, model, k, d)
            for i in range(n):
                live_b = nbr_before[i, : deg_before[i]]
                live_a = nbr[i, : deg[i]]
                if not np.array_equal(live_b, live_a):
                    events.append(SwitchEvent(t, i, before[i], after[i]))
            continue
        if code == kernels.FAILED:
            traj = _trajectory(times, values, events, HORIZON, state0, radius, cfg)
            raise IntegrationFailure(
                f"order violation persisted at h_min={cfg.h_min:g} near t={t:.6g}",
                t, state0.with_values(x.copy()), traj,
            )
        if code == kernels.CONVERGED:
            status = CONVERGED
        elif t >= cfg.t_max:
            f = kernels.field(x, nbr, deg)
            quiet = t - t_last_switch >= cfg.stall_window - 1e-9 * cfg.step
            status = CONVERGED if np.max(np.abs(f)) < cfg.conv_tol and quiet else HORIZON
        else:
            n_rec += 1
        if t > times[-1]:
            times.append(t)
            values.append(x.copy())
    if status == HORIZON:
        log.info("horizon reached at t=%g with %d switch events", t, len(events))
    return _trajectory(times, values, events, status, state0, radius, cfg)


def _trajectory(times, values, events, status, state0, radius, cfg):
    return Trajectory(
        times=np.array(times),
        values=np.array(values).reshape(len(values), state0.n),
        events=events,
        status=status,
        k=state0.k,
        radius=radius,
        config=cfg,
    )
