"""State-dependent k-nearest-neighbour neighbourhoods and the interaction graph.

Indices are 0-based throughout the Python API.  Serialised formats (see
``topodyn.io``) shift them to 1-based.

States may hold ``float`` opinions (the fast path, backed by
``topodyn.kernels``) or exact rationals such as ``fractions.Fraction``
(an object array, handled by plain Python loops).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from numbers import Rational

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels


@dataclass(frozen=True)
class ModelParams:
    n: int
    k: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.k) != self.k:
            raise ValueError("n and k must be integers")
        if not 1 <= self.k < self.n:
            raise ValueError(f"need 1 <= k < n, got n={self.n}, k={self.k}")


def _as_opinions(x):
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("opinions must be a 1-d sequence")
    if arr.dtype == object:
        if all(isinstance(v, Rational) for v in arr):
            out = np.empty(arr.shape[0], dtype=object)
            out[:] = list(arr)
            return out
        arr = np.array([float(v) for v in arr])
    arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("opinions must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class OpinionState:
    """Opinions of n agents together with the neighbour count k."""

    x: np.ndarray
    params: ModelParams

    def __post_init__(self):
        arr = _as_opinions(self.x)
        if arr.shape[0] != self.params.n:
            raise ValueError(f"expected {self.params.n} opinions, got {arr.shape[0]}")
        arr.flags.writeable = False
        object.__setattr__(self, "x", arr)

    @classmethod
    def from_values(cls, x, k: int) -> "OpinionState":
        return cls(x, ModelParams(len(x), k))

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def exact(self) -> bool:
        """True when opinions are exact rationals rather than floats."""
        return self.x.dtype == object

    def with_values(self, x) -> "OpinionState":
        return OpinionState(x, ModelParams(len(x), self.k))

    def __eq__(self, other):
        if not isinstance(other, OpinionState):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.x, other.x)

    def __repr__(self):
        return f"OpinionState(k={self.k}, x={self.x.tolist()!r})"


@dataclass(frozen=True, eq=False)
class NeighborMap:
    """Row i holds the k neighbours of agent i, nearest first, lower index first on ties."""

    neighbors: np.ndarray

    def __post_init__(self):
        arr = np.array(self.neighbors, dtype=np.int64)
        arr.flags.writeable = False
        object.__setattr__(self, "neighbors", arr)

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    def __getitem__(self, i):
        return self.neighbors[i]

    def sets(self) -> list[frozenset]:
        return [frozenset(row.tolist()) for row in self.neighbors]

    def closest(self) -> np.ndarray:
        """The nearest agent of every agent (``cl(i)`` in the k=1 analysis)."""
        return self.neighbors[:, 0].copy()

    def __eq__(self, other):
        if not isinstance(other, NeighborMap):
            return NotImplemented
        return np.array_equal(self.neighbors, other.neighbors)

    def __hash__(self):
        return hash(self.neighbors.tobytes())


@dataclass(frozen=True)
class InteractionGraph:
    n: int
    edges: frozenset

    def out_degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for i, _ in self.edges:
            deg[i] += 1
        return deg

    def successors(self, i) -> list[int]:
        return sorted(j for a, j in self.edges if a == i)

    def to_sparse(self) -> csr_matrix:
        if not self.edges:
            return csr_matrix((self.n, self.n))
        rows, cols = zip(*sorted(self.edges))
        return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n))


@dataclass(frozen=True)
class K1StructureReport:
    components: list
    circuits: list
    deltas: np.ndarray
    valid: bool
    problems: list = field(default_factory=list)


def _knn_exact(x, k):
    n = len(x)
    rows = []
    for i in range(n):
        order = sorted((j for j in range(n) if j != i), key=lambda j: (abs(x[j] - x[i]), j))
        rows.append(order[:k])
    return np.array(rows, dtype=np.int64).reshape(n, k)


def compute_neighbors(state: OpinionState) -> NeighborMap:
    if state.exact:
        return NeighborMap(_knn_exact(state.x, state.k))
    return NeighborMap(kernels.knn_table(state.x, state.k))


def build_graph(nm: NeighborMap) -> InteractionGraph:
    edges = frozenset((i, int(j)) for i in range(nm.n) for j in nm.neighbors[i])
    return InteractionGraph(nm.n, edges)


def graph_from_edges(n: int, edges) -> InteractionGraph:
    return InteractionGraph(n, frozenset((int(i), int(j)) for i, j in edges))


def weak_components(g: InteractionGraph) -> list[frozenset]:
    """Weakly connected components, ordered by their smallest member."""
    _, labels = connected_components(g.to_sparse(), directed=True, connection="weak")
    groups: dict[int, list[int]] = {}
    for v, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(v)
    return sorted((frozenset(m) for m in groups.values()), key=min)


def stable_order(x) -> np.ndarray:
    """Agent indices sorted by (opinion, index)."""
    return np.array(sorted(range(len(x)), key=lambda i: (x[i], i)), dtype=np.int64)


def _functional_components(cl) -> list[frozenset]:
    # union-find over the edges i -> cl[i]; same result as weak_components
    parent = list(range(len(cl)))

    def root(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, j in enumerate(cl.tolist()):
        a, b = root(i), root(j)
        if a != b:
            parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for v in range(len(cl)):
        groups.setdefault(root(v), []).append(v)
    return sorted((frozenset(m) for m in groups.values()), key=min)


def validate_k1_structure(state: OpinionState) -> K1StructureReport:
    """Check that every weak component of G(x) is a tree hanging off one 2-circuit."""
    if state.k != 1:
        raise ValueError(f"k=1 structure requires k=1, got k={state.k}")
    cl = compute_neighbors(state).closest()
    comps = _functional_components(cl)
    problems = []
    circuits = []
    for comp in comps:
        pairs = sorted({(min(i, int(cl[i])), max(i, int(cl[i]))) for i in comp if cl[cl[i]] == i})
        if len(pairs) != 1:
            problems.append(f"component {sorted(comp)} has {len(pairs)} 2-circuits")
            circuits.append(pairs[0] if pairs else None)
            continue
        circuit = pairs[0]
        circuits.append(circuit)
        for v in comp:
            u = v
            for _ in range(len(comp)):
                if u in circuit:
                    break
                u = int(cl[u])
            if u not in circuit:
                problems.append(f"agent {v} does not reach circuit {circuit}")

    order = stable_order(state.x)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    deltas = rank[cl[order]] - np.arange(len(order))
    return K1StructureReport(comps, circuits, deltas, not problems, problems)
