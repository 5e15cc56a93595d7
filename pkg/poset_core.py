"""
Poset Core - Ground-truth partial orders and DAG machinery
Closure, reduction, width, chain decomposition, path cover and linear-extension checks
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from utils import CyclicInput, LengthMismatch

logger = logging.getLogger(__name__)


class Relation(IntEnum):
    """Answer to a comparison between two elements"""
    INCOMPARABLE = 0
    LESS = 1
    GREATER = 2
    EQUAL = 3

    def flipped(self) -> 'Relation':
        """The relation seen from the other endpoint"""
        if self is Relation.LESS:
            return Relation.GREATER
        if self is Relation.GREATER:
            return Relation.LESS
        return self


@dataclass(frozen=True)
class Dag:
    """Directed graph on vertices [0, n); acyclicity is checked by the operations"""
    n: int
    edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside [0, {self.n})")
        object.__setattr__(self, 'edges', edges)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(sorted(self.edges))
        return graph

    def to_json(self) -> Dict:
        return {'n': self.n, 'edges': [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, data: Dict) -> 'Dag':
        return cls(int(data['n']), frozenset(tuple(e) for e in data.get('edges', [])))


class Poset:
    """
    Strict partial order over [0, n) stored as a dense boolean matrix.

    less[u, v] is True exactly when u precedes v. The matrix is frozen after
    construction so a Poset can be shared read-only between threads.
    """

    def __init__(self, less: np.ndarray, validate: bool = True):
        matrix = np.array(less, dtype=bool, copy=True)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"relation matrix must be square, got shape {matrix.shape}")
        if validate:
            self._validate(matrix)
        matrix.setflags(write=False)
        self._less = matrix

    @staticmethod
    def _validate(matrix: np.ndarray) -> None:
        if matrix.diagonal().any():
            raise ValueError("relation is not irreflexive")
        if (matrix & matrix.T).any():
            raise ValueError("relation is not antisymmetric")
        as_float = matrix.astype(np.float32)
        composed = (as_float @ as_float) > 0
        if (composed & ~matrix).any():
            raise ValueError("relation is not transitive")

    @classmethod
    def total_order(cls, order: Sequence[int]) -> 'Poset':
        n = len(order)
        rank = np.empty(n, dtype=np.int64)
        rank[np.asarray(order, dtype=np.int64)] = np.arange(n)
        return cls(rank[:, None] < rank[None, :], validate=False)

    @classmethod
    def antichain(cls, n: int) -> 'Poset':
        return cls(np.zeros((n, n), dtype=bool), validate=False)

    @property
    def n(self) -> int:
        return self._less.shape[0]

    @property
    def less(self) -> np.ndarray:
        return self._less

    @property
    def rel(self) -> np.ndarray:
        """n x n matrix of Relation codes"""
        codes = np.full((self.n, self.n), int(Relation.INCOMPARABLE), dtype=np.int8)
        codes[self._less] = int(Relation.LESS)
        codes[self._less.T] = int(Relation.GREATER)
        np.fill_diagonal(codes, int(Relation.EQUAL))
        return codes

    def relation(self, u: int, v: int) -> Relation:
        if u == v:
            return Relation.EQUAL
        if self._less[u, v]:
            return Relation.LESS
        if self._less[v, u]:
            return Relation.GREATER
        return Relation.INCOMPARABLE

    def comparable(self, u: int, v: int) -> bool:
        return bool(self._less[u, v] or self._less[v, u])

    def down_set(self, p: int) -> FrozenSet[int]:
        return frozenset(int(u) for u in np.flatnonzero(self._less[:, p]))

    def up_set(self, p: int) -> FrozenSet[int]:
        return frozenset(int(u) for u in np.flatnonzero(self._less[p]))

    def hasse_edges(self) -> List[Tuple[int, int]]:
        """Cover relations: the edges of the transitive reduction"""
        as_float = self._less.astype(np.float32)
        implied = (as_float @ as_float) > 0
        cover = self._less & ~implied
        return [(int(u), int(v)) for u, v in zip(*np.nonzero(cover))]

    def to_dag(self) -> Dag:
        return Dag(self.n, frozenset(self.hasse_edges()))

    def to_json(self) -> Dict:
        """Posets are persisted as their transitive reduction"""
        return self.to_dag().to_json()

    @classmethod
    def from_json(cls, data: Dict) -> 'Poset':
        return transitive_closure(Dag.from_json(data))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poset):
            return NotImplemented
        return self._less.shape == other._less.shape and bool(np.array_equal(self._less, other._less))

    __hash__ = None

    def __repr__(self) -> str:
        return f"Poset(n={self.n}, relations={int(self._less.sum())})"


@dataclass(frozen=True)
class ChainDecomposition:
    """Chains partitioning the ground set, each listed in ascending order"""
    chains: Tuple[Tuple[int, ...], ...]

    @property
    def k(self) -> int:
        return len(self.chains)

    def is_valid_for(self, poset: Poset) -> bool:
        seen = [v for chain in self.chains for v in chain]
        if sorted(seen) != list(range(poset.n)):
            return False
        return all(poset.less[a, b] for chain in self.chains for a, b in zip(chain, chain[1:]))


@dataclass(frozen=True)
class LinearExtension:
    """Permutation in which no element is preceded by something above it"""
    order: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'order', tuple(int(v) for v in self.order))

    def __len__(self) -> int:
        return len(self.order)

    def __iter__(self):
        return iter(self.order)


class ChainCover:
    """
    Minimum chain cover maintained by incremental bipartite matching.

    Vertices must be added so that every new vertex is maximal among those
    already added (any linear extension order works). Each addition needs at
    most one augmenting path, searched from the new vertex, so the matching
    stays maximum and the chain count equals the width of the added set.
    Candidates are scanned lowest id first.
    """

    def __init__(self, less: np.ndarray):
        self._less = less
        n = less.shape[0]
        self._added = np.zeros(n, dtype=bool)
        self._succ: Dict[int, int] = {}
        self._pred: Dict[int, int] = {}
        self._members: List[int] = []

    def __len__(self) -> int:
        return len(self._members)

    @property
    def size(self) -> int:
        """Number of chains in the current cover"""
        return len(self._members) - len(self._succ)

    def _below(self, v: int) -> np.ndarray:
        return np.flatnonzero(self._less[:, v] & self._added)

    def add(self, v: int) -> None:
        below = self._below(v)
        self._added[v] = True
        self._members.append(v)
        if below.size == 0:
            return
        for u in below:
            u = int(u)
            if u not in self._succ:
                self._link(u, v)
                return
        self._augment(v, below)

    def _link(self, u: int, v: int) -> None:
        self._succ[u] = v
        self._pred[v] = u

    def _augment(self, root: int, root_below: np.ndarray) -> bool:
        parent: Dict[int, int] = {}
        visited = set()
        stack = [(root, iter(root_below))]
        while stack:
            right, candidates = stack[-1]
            pushed = False
            for u in candidates:
                u = int(u)
                if u in visited:
                    continue
                visited.add(u)
                parent[u] = right
                matched = self._succ.get(u)
                if matched is None:
                    self._flip(u, parent, root)
                    return True
                stack.append((matched, iter(self._below(matched))))
                pushed = True
                break
            if not pushed:
                stack.pop()
        return False

    def _flip(self, u: int, parent: Dict[int, int], root: int) -> None:
        while True:
            right = parent[u]
            previous = self._pred.get(right)
            self._link(u, right)
            if right == root:
                return
            u = previous

    def chains(self) -> List[List[int]]:
        heads = sorted(v for v in self._members if v not in self._pred)
        result = []
        for head in heads:
            chain = [head]
            while chain[-1] in self._succ:
                chain.append(self._succ[chain[-1]])
            result.append(chain)
        return result


def topological_key(less: np.ndarray, vertices: Iterable[int]) -> List[int]:
    """Order vertices by (number of predecessors among them, id): a linear extension"""
    verts = sorted(int(v) for v in vertices)
    if not verts:
        return []
    idx = np.asarray(verts, dtype=np.int64)
    counts = less[np.ix_(idx, idx)].sum(axis=0)
    return [verts[i] for i in np.lexsort((idx, counts))]


def add_relation(less: np.ndarray, a: int, b: int) -> bool:
    """
    Record a < b in a closed relation matrix, keeping it transitively closed.

    Returns True when the matrix changed. Raises CyclicInput when the new pair
    contradicts what is already known.
    """
    if a == b or less[b, a]:
        raise CyclicInput(f"adding {a} < {b} closes a cycle")
    if less[a, b]:
        return False
    below = less[:, a].copy()
    below[a] = True
    above = less[b].copy()
    above[b] = True
    less |= np.outer(below, above)
    return True


# ===================== OPERATIONS =====================

def transitive_closure(dag: Dag) -> Poset:
    """Reachability poset of a DAG"""
    graph = dag.to_networkx()
    try:
        order = list(nx.topological_sort(graph))
    except nx.NetworkXUnfeasible as exc:
        raise CyclicInput(f"graph on {dag.n} vertices contains a cycle") from exc

    less = np.zeros((dag.n, dag.n), dtype=bool)
    for u in reversed(order):
        for v in graph.successors(u):
            less[u, v] = True
            less[u] |= less[v]
    return Poset(less, validate=False)


def transitive_reduction(dag: Dag) -> Dag:
    """Minimal DAG with the same closure"""
    closure = transitive_closure(dag)
    less = closure.less
    kept = frozenset((u, v) for u, v in dag.edges if not (less[u] & less[:, v]).any())
    return Dag(dag.n, kept)


def chain_decomposition(poset: Poset) -> ChainDecomposition:
    """
    Minimum chain cover from a maximum matching on the comparability split graph.

    Every vertex gets a left copy and a right copy, with an edge (u, L) - (v, R)
    for each u < v. A matched pair links v directly after u in a chain, so the
    number of chains is n minus the matching size.
    """
    n = poset.n
    if n == 0:
        return ChainDecomposition(())
    split = nx.Graph()
    left = [('L', u) for u in range(n)]
    split.add_nodes_from(left, bipartite=0)
    split.add_nodes_from((('R', v) for v in range(n)), bipartite=1)
    split.add_edges_from((('L', int(u)), ('R', int(v))) for u, v in zip(*np.nonzero(poset.less)))
    matching = nx.bipartite.maximum_matching(split, top_nodes=left)

    successor: Dict[int, int] = {}
    for (side, u), (_, v) in matching.items():
        if side == 'L':
            successor[u] = v
    has_pred = set(successor.values())
    chains = []
    for head in range(n):
        if head in has_pred:
            continue
        chain = [head]
        while chain[-1] in successor:
            chain.append(successor[chain[-1]])
        chains.append(tuple(chain))
    return ChainDecomposition(tuple(chains))


def width(poset: Poset) -> int:
    """Size of a maximum antichain, equal to the minimum number of chains (Dilworth)"""
    if poset.n == 0:
        return 0
    return chain_decomposition(poset).k


def path_cover(dag: Dag) -> List[List[int]]:
    """
    Cover a DAG by directed paths, one per chain of a minimum chain cover.

    Closure chains are contracted back onto DAG edges by splicing in shortest
    paths between consecutive chain elements, so interior vertices may appear
    on more than one path.
    """
    graph = dag.to_networkx()
    closure = transitive_closure(dag)
    paths = []
    for chain in chain_decomposition(closure).chains:
        path = [chain[0]]
        for a, b in zip(chain, chain[1:]):
            if graph.has_edge(a, b):
                path.append(b)
            else:
                path.extend(nx.shortest_path(graph, a, b)[1:])
        paths.append(path)
    return paths


def is_linear_extension(le: LinearExtension, poset: Poset) -> bool:
    """True iff no element of the order is preceded by something above it"""
    order = list(le.order)
    if len(order) != poset.n:
        raise LengthMismatch(f"extension has {len(order)} entries, poset has {poset.n}")
    if sorted(order) != list(range(poset.n)):
        raise ValueError("extension is not a permutation of the ground set")
    idx = np.asarray(order, dtype=np.int64)
    reordered = poset.less[np.ix_(idx, idx)]
    return not np.tril(reordered, -1).any()


def linear_extension(poset: Poset) -> LinearExtension:
    """Some linear extension of the poset"""
    return LinearExtension(tuple(topological_key(poset.less, range(poset.n))))


def induced_poset(poset: Poset, subset: Iterable[int]) -> Tuple[Poset, List[int]]:
    """Restriction to a subset, relabelled to [0, |subset|); returns the id mapping too"""
    verts = sorted(int(v) for v in subset)
    idx = np.asarray(verts, dtype=np.int64)
    return Poset(poset.less[np.ix_(idx, idx)], validate=False), verts
