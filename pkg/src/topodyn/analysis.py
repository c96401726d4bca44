"""Cluster extraction, state classification and stability predicates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import rhs
from .topology import OpinionState, stable_order

CONSENSUS = "consensus"
CLUSTERIZATION = "clusterization"
EQUILIBRIUM_NON_CLUSTERIZATION = "equilibrium_non_clusterization"
NON_EQUILIBRIUM = "non_equilibrium"


@dataclass(frozen=True)
class ClusterPartition:
    """Clusters in ascending opinion order as ``(value, members)`` pairs."""

    clusters: tuple
    eps_cluster: float

    @property
    def sizes(self) -> list[int]:
        return [len(m) for _, m in self.clusters]

    @property
    def members(self) -> list[frozenset]:
        return [m for _, m in self.clusters]

    @property
    def values(self) -> list:
        return [v for v, _ in self.clusters]

    def __len__(self):
        return len(self.clusters)

    def blocks(self) -> frozenset:
        """Membership only, for comparing partitions regardless of opinion values."""
        return frozenset(self.members)

    def restricted(self, agents, relabel=None) -> frozenset:
        """Blocks restricted to ``agents``, optionally relabelled through a mapping."""
        keep = set(agents)
        out = []
        for m in self.members:
            block = [a for a in m if a in keep]
            if block:
                out.append(frozenset(relabel[a] if relabel is not None else a for a in block))
        return frozenset(out)


@dataclass(frozen=True)
class StateClass:
    kind: str
    partition: ClusterPartition


def _as_values(state):
    return state.x if isinstance(state, OpinionState) else np.asarray(state)


def find_clusters(state, eps: float = 0.0) -> ClusterPartition:
    """Single-linkage grouping: sorted neighbours within ``eps`` share a cluster."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    x = _as_values(state)
    order = stable_order(x)
    groups = [[int(order[0])]]
    for a, b in zip(order[:-1], order[1:]):
        if x[b] - x[a] <= eps:
            groups[-1].append(int(b))
        else:
            groups.append([int(b)])
    clusters = []
    for g in groups:
        vals = [x[i] for i in g]
        if x.dtype == object or vals[0] == vals[-1]:
            value = vals[0]
        else:
            value = float(np.mean(vals))
        clusters.append((value, frozenset(g)))
    return ClusterPartition(tuple(clusters), float(eps))


def is_equilibrium(state: OpinionState, tol: float = 0.0, radius: float | None = None) -> bool:
    v = rhs(state, radius=radius)
    return max(abs(e) for e in v) <= tol


def classify_state(state: OpinionState, eps: float = 0.0, tol: float = 0.0, radius: float | None = None) -> StateClass:
    """Consensus, clusterization, non-clusterization equilibrium, or neither.

    Under the metric model (``radius`` given) cluster sizes carry no
    threshold, so any equilibrium with several clusters is a clusterization.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    p = find_clusters(state, eps)
    if len(p) == 1:
        return StateClass(CONSENSUS, p)
    if radius is None:
        if min(p.sizes) >= state.k + 1:
            return StateClass(CLUSTERIZATION, p)
        if is_equilibrium(state, tol):
            return StateClass(EQUILIBRIUM_NON_CLUSTERIZATION, p)
        return StateClass(NON_EQUILIBRIUM, p)
    if is_equilibrium(state, tol, radius=radius):
        return StateClass(CLUSTERIZATION, p)
    return StateClass(NON_EQUILIBRIUM, p)


def _check_clusterization(p: ClusterPartition, k: int):
    small = [s for s in p.sizes if s < k + 1]
    if small:
        raise ValueError(f"not a clusterization for k={k}: cluster sizes {p.sizes}")


def is_structurally_stable(p: ClusterPartition, k: int) -> bool:
    """True iff no cluster exceeds 2k+1 agents."""
    _check_clusterization(p, k)
    return max(p.sizes) <= 2 * k + 1


def is_removal_stable(p: ClusterPartition, k: int) -> bool:
    """True iff every cluster keeps at least k+1 agents after losing one."""
    _check_clusterization(p, k)
    return min(p.sizes) >= k + 2


def diameter(state) -> float:
    x = _as_values(state)
    return max(x) - min(x)


def clusterization(sizes, values, k: int) -> OpinionState:
    """Build a clusterization with the given cluster sizes placed at ``values``.

    Agents are numbered cluster by cluster in the order given.
    """
    x = np.repeat(np.asarray(values, dtype=np.float64), sizes)
    return OpinionState.from_values(x, k)
