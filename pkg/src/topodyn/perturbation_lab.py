"""Robustness experiments: perturb, split, add or remove agents, and the metric contrast."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import StateClass, classify_state, clusterization, find_clusters
from .dynamics import SimConfig, Trajectory, integrate, rhs
from .topology import ModelParams, OpinionState

TOPOLOGICAL = "topological"
METRIC = "metric"
KINDS = ("perturb", "split", "add", "remove", "contrast")


@dataclass(frozen=True)
class MetricParams:
    d: float

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("interaction radius d must be positive")


def perturb(state: OpinionState, magnitude: float, seed: int) -> OpinionState:
    """Add independent uniform noise on ``[-magnitude, magnitude]`` to every opinion."""
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    if magnitude == 0:
        return state
    noise = np.random.default_rng(seed).uniform(-magnitude, magnitude, state.n)
    return state.with_values(state.x + noise)


def split_perturbation(state: OpinionState, cluster, eps: float) -> OpinionState:
    """Push the lower-index half of a large cluster down by eps and the rest up."""
    members = sorted(int(i) for i in cluster)
    k = state.k
    if len(members) <= 2 * k + 1:
        raise ValueError(f"cluster of {len(members)} agents cannot split into two of at least {k + 1}")
    if len({state.x[i] for i in members}) != 1:
        raise ValueError("cluster members must share one opinion")
    if eps == 0:
        return state
    x = np.array(state.x, dtype=np.float64)
    low = math.ceil(len(members) / 2)
    x[members[:low]] -= eps
    x[members[low:]] += eps
    return state.with_values(x)


def add_agent(state: OpinionState, opinion: float) -> OpinionState:
    """Append a newcomer; it takes the highest index, so it loses every tie."""
    return state.with_values(np.append(state.x, opinion))


def remove_agent(state: OpinionState, agent: int) -> OpinionState:
    if not 0 <= agent < state.n:
        raise IndexError(f"no agent {agent} among {state.n}")
    if state.n - 1 <= state.k:
        raise ValueError(f"removing an agent would leave n={state.n - 1} <= k={state.k}")
    return OpinionState(np.delete(state.x, agent), ModelParams(state.n - 1, state.k))


def metric_rhs(state: OpinionState, mp: MetricParams) -> np.ndarray:
    return rhs(state, radius=mp.d)


@dataclass
class Scenario:
    """A disruption applied to a base state.

    Agent indices here are 0-based; ``topodyn.io`` converts from the
    1-based indices used in scenario files.
    """

    kind: str
    base: OpinionState
    models: tuple = (TOPOLOGICAL,)
    radius: float | None = None
    magnitude: float = 0.0
    seed: int = 0
    opinion: float | None = None
    agent: int | None = None
    cluster: tuple | None = None
    eps: float = 0.01
    eps_cluster: float = 1e-6
    tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "contrast":
            self.models = (TOPOLOGICAL, METRIC)
        self.models = tuple(self.models)
        for m in self.models:
            if m not in (TOPOLOGICAL, METRIC):
                raise ValueError(f"unknown model {m!r}")
        if METRIC in self.models:
            MetricParams(self.radius if self.radius is not None else 0.0)
        if self.kind in ("add", "contrast") and self.opinion is None:
            raise ValueError(f"{self.kind} scenario needs a newcomer opinion")
        if self.kind == "remove" and self.agent is None:
            raise ValueError("remove scenario needs an agent")
        if self.kind == "split" and self.cluster is None:
            raise ValueError("split scenario needs a cluster")

    @classmethod
    def from_clusters(cls, kind, sizes, values, k, **kw):
        return cls(kind, clusterization(sizes, values, k), **kw)

    def disrupted(self):
        """The disrupted state and, per surviving original agent, its index there."""
        base = self.base
        originals = list(range(base.n))
        if self.kind == "perturb":
            return perturb(base, self.magnitude, self.seed), {i: i for i in originals}
        if self.kind == "split":
            return split_perturbation(base, self.cluster, self.eps), {i: i for i in originals}
        if self.kind in ("add", "contrast"):
            return add_agent(base, self.opinion), {i: i for i in originals}
        new = remove_agent(base, self.agent)
        return new, {i: (i if i < self.agent else i - 1) for i in originals if i != self.agent}


@dataclass
class ModelRun:
    model: str
    base: StateClass
    initial: StateClass
    final: StateClass
    original_agents_moved: float
    partition_preserved: bool
    event_count: int
    status: str
    t_final: float
    initial_rhs_sup: float
    trajectory: Trajectory | None = field(default=None, repr=False)


@dataclass
class ExperimentReport:
    scenario: str
    runs: list
    newcomer_index: int | None = None
    perturbation_magnitude: float | None = None

    def run(self, model: str = TOPOLOGICAL) -> ModelRun:
        for r in self.runs:
            if r.model == model:
                return r
        raise KeyError(model)

    @property
    def partition_preserved(self) -> bool:
        return all(r.partition_preserved for r in self.runs)

    @property
    def original_agents_moved(self) -> float:
        return max(r.original_agents_moved for r in self.runs)

    @property
    def event_count(self) -> int:
        return sum(r.event_count for r in self.runs)


def run_experiment(scenario: Scenario, cfg: SimConfig | None = None, keep_trajectories: bool = False) -> ExperimentReport:
    """Apply the disruption, integrate each requested model and compare with the base."""
    cfg = cfg or SimConfig()
    start, where = scenario.disrupted()
    base = scenario.base
    runs = []
    for model in scenario.models:
        radius = scenario.radius if model == METRIC else None
        traj = integrate(start, cfg, radius=radius)
        final = traj.final
        base_cls = classify_state(base, scenario.eps_cluster, scenario.tol, radius=radius)
        init_cls = classify_state(start, scenario.eps_cluster, scenario.tol, radius=radius)
        final_cls = classify_state(final, scenario.eps_cluster, scenario.tol, radius=radius)
        moved = max((abs(final.x[j] - base.x[i]) for i, j in where.items()), default=0.0)
        before = base_cls.partition.restricted(where.keys(), where)
        after = final_cls.partition.restricted(where.values())
        runs.append(
            ModelRun(
                model=model,
                base=base_cls,
                initial=init_cls,
                final=final_cls,
                original_agents_moved=float(moved),
                partition_preserved=before == after,
                event_count=len(traj.events),
                status=traj.status,
                t_final=traj.t_final,
                initial_rhs_sup=float(np.max(np.abs(rhs(start, radius=radius)))),
                trajectory=traj if keep_trajectories else None,
            )
        )
    return ExperimentReport(
        scenario=scenario.kind,
        runs=runs,
        newcomer_index=base.n if scenario.kind in ("add", "contrast") else None,
        perturbation_magnitude=scenario.magnitude if scenario.kind == "perturb" else None,
    )


def min_gap(state: OpinionState, eps: float = 0.0) -> float:
    """Smallest distance between adjacent clusters."""
    vals = find_clusters(state, eps).values
    return float(min(b - a for a, b in zip(vals[:-1], vals[1:])))
