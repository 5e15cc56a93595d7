"""
Query Oracle - Metered comparison access to a hidden poset
Answers relation queries restricted to the query graph, counts distinct queries,
accumulates weighted cost, enforces budgets and exposes restricted views
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from poset_core import Dag, Poset, Relation, transitive_closure
from utils import BudgetExceeded, NotAnEdge, sorted_pair

logger = logging.getLogger(__name__)

COST_TOLERANCE = 1e-9


class QueryGraph:
    """
    Undirected query graph over [0, n) together with the hidden ground truth.

    Edges are stored as (min, max) pairs. Weights default to 1 for every edge
    when no weight map is given.
    """

    def __init__(self, n: int, edges: Iterable[Tuple[int, int]], truth: Poset,
                 weights: Optional[Dict[Tuple[int, int], float]] = None,
                 model: str = 'er', params: Optional[Dict[str, Any]] = None,
                 seed: Optional[int] = None):
        if truth.n != n:
            raise ValueError(f"ground truth has {truth.n} elements, graph has {n}")
        normalized = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"invalid edge ({u}, {v}) for n={n}")
            normalized.add(sorted_pair(u, v))

        self.n = n
        self.truth = truth
        self.model = model
        self.params = dict(params or {})
        self.seed = seed
        self._edges: Tuple[Tuple[int, int], ...] = tuple(sorted(normalized))
        self._edge_set: FrozenSet[Tuple[int, int]] = frozenset(normalized)

        adjacency: List[List[int]] = [[] for _ in range(n)]
        for u, v in self._edges:
            adjacency[u].append(v)
            adjacency[v].append(u)
        self._adj = tuple(tuple(sorted(nbrs)) for nbrs in adjacency)

        self._weights: Optional[Dict[Tuple[int, int], float]] = None
        if weights is not None:
            self._weights = {}
            for (u, v), w in weights.items():
                key = sorted_pair(int(u), int(v))
                if key not in self._edge_set:
                    raise ValueError(f"weight given for non-edge {key}")
                if w < 0:
                    raise ValueError(f"negative weight {w} on edge {key}")
                self._weights[key] = float(w)
            missing = self._edge_set.difference(self._weights)
            if missing:
                raise ValueError(f"{len(missing)} edges have no weight")

    # ---------- structure ----------

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    @property
    def is_weighted(self) -> bool:
        return self._weights is not None

    def has_edge(self, u: int, v: int) -> bool:
        return sorted_pair(u, v) in self._edge_set

    def neighbors(self, u: int) -> Tuple[int, ...]:
        return self._adj[u]

    def weight(self, u: int, v: int) -> float:
        if self._weights is None:
            return 1.0
        return self._weights[sorted_pair(u, v)]

    def distinct_weights(self) -> Tuple[float, ...]:
        if self._weights is None:
            return (1.0,) if self._edges else ()
        return tuple(sorted(set(self._weights.values())))

    def is_complete(self) -> bool:
        return self.num_edges == self.n * (self.n - 1) // 2

    # ---------- ground truth (audits only) ----------

    def relation(self, u: int, v: int) -> Relation:
        return self.truth.relation(u, v)

    def oriented_edges(self, max_weight: Optional[float] = None) -> List[Tuple[int, int]]:
        """Edges oriented by the ground truth; incomparable edges are dropped"""
        less = self.truth.less
        result = []
        for u, v in self._edges:
            if max_weight is not None and self.weight(u, v) > max_weight:
                continue
            if less[u, v]:
                result.append((u, v))
            elif less[v, u]:
                result.append((v, u))
        return result

    def oriented_closure(self, max_weight: Optional[float] = None) -> Poset:
        """Closure of the oriented edge set (the poset the graph can reveal)"""
        return transitive_closure(Dag(self.n, frozenset(self.oriented_edges(max_weight))))

    def determines_truth(self) -> bool:
        """The query graph can identify the poset: closure of oriented edges equals truth"""
        return self.oriented_closure() == self.truth

    def weight_restricted_truth(self, max_weight: float) -> Poset:
        return self.oriented_closure(max_weight)

    # ---------- persistence ----------

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'n': self.n,
            'edges': [list(e) for e in self._edges],
            'truth_reduction': [list(e) for e in sorted(self.truth.hasse_edges())],
            'model': self.model,
            'params': self.params,
            'seed': self.seed,
        }
        if self._weights is not None:
            data['weights'] = [self._weights[e] for e in self._edges]
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(',', ':'))

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps() + '\n', encoding='utf-8')
        logger.info(f"Instance written: {path} (model={self.model}, n={self.n}, edges={self.num_edges})")

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'QueryGraph':
        n = int(data['n'])
        edges = [tuple(e) for e in data['edges']]
        truth = transitive_closure(Dag(n, frozenset(tuple(e) for e in data['truth_reduction'])))
        weights = None
        if data.get('weights') is not None:
            weights = {sorted_pair(int(u), int(v)): float(w) for (u, v), w in zip(edges, data['weights'])}
        return cls(n, edges, truth, weights=weights, model=data.get('model', 'er'),
                   params=data.get('params', {}), seed=data.get('seed'))

    @classmethod
    def load(cls, path: Path) -> 'QueryGraph':
        return cls.from_json(json.loads(Path(path).read_text(encoding='utf-8')))

    def __repr__(self) -> str:
        return f"QueryGraph(model={self.model}, n={self.n}, edges={self.num_edges})"


class SessionView(ABC):
    """
    Anything an algorithm can query through.

    Views restrict which vertices and edges are visible; all metering flows to
    the root OracleSession.
    """

    @property
    @abstractmethod
    def root(self) -> 'OracleSession':
        ...

    @property
    @abstractmethod
    def vertices(self) -> Tuple[int, ...]:
        ...

    @abstractmethod
    def has_edge(self, u: int, v: int) -> bool:
        ...

    @abstractmethod
    def neighbors(self, u: int) -> Tuple[int, ...]:
        ...

    @abstractmethod
    def query(self, u: int, v: int) -> Relation:
        ...

    @property
    def graph(self) -> QueryGraph:
        return self.root.graph

    @property
    def n(self) -> int:
        return len(self.vertices)

    def weight(self, u: int, v: int) -> float:
        return self.graph.weight(u, v)

    def edges(self) -> Iterator[Tuple[int, int]]:
        for u in self.vertices:
            for v in self.neighbors(u):
                if u < v:
                    yield (u, v)

    def known(self, u: int, v: int) -> Optional[Relation]:
        """Relation already paid for, if any; never charges"""
        return self.root.known(u, v)

    def induced(self, subset: Iterable[int]) -> 'InducedSession':
        return InducedSession(self, subset)

    def reversed(self) -> 'ReversedSession':
        return ReversedSession(self)

    def weight_filtered(self, max_weight: float) -> 'WeightFilteredSession':
        return WeightFilteredSession(self, max_weight)

    def budgeted(self, budget: float) -> 'BudgetedSession':
        return BudgetedSession(self, budget)

    def report(self) -> Dict[str, float]:
        return self.root.report()


class OracleSession(SessionView):
    """
    Metered oracle over a full query graph.

    The first query of an edge is charged its weight; repeats are answered
    from cache for free unless charge_every_call is set, in which case every
    call is charged (answers are still cached).
    """

    def __init__(self, graph: QueryGraph, budget: Optional[float] = None,
                 charge_every_call: bool = False):
        self._graph = graph
        self.budget = budget
        self.charge_every_call = charge_every_call
        self._answered: Dict[Tuple[int, int], Relation] = {}
        self.query_count = 0
        self.cost = 0.0
        self._vertices = tuple(range(graph.n))

    @property
    def root(self) -> 'OracleSession':
        return self

    @property
    def graph(self) -> QueryGraph:
        return self._graph

    @property
    def vertices(self) -> Tuple[int, ...]:
        return self._vertices

    @property
    def answered(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset(self._answered)

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and self._graph.has_edge(u, v)

    def neighbors(self, u: int) -> Tuple[int, ...]:
        return self._graph.neighbors(u)

    def pending_cost(self, u: int, v: int) -> float:
        """What query(u, v) would charge right now"""
        if sorted_pair(u, v) in self._answered and not self.charge_every_call:
            return 0.0
        return self._graph.weight(u, v)

    def known(self, u: int, v: int) -> Optional[Relation]:
        key = sorted_pair(u, v)
        cached = self._answered.get(key)
        if cached is None:
            return None
        return cached if u == key[0] else cached.flipped()

    def query(self, u: int, v: int) -> Relation:
        if not self.has_edge(u, v):
            raise NotAnEdge(f"({u}, {v}) is not an edge of the query graph")
        key = sorted_pair(u, v)
        cached = self._answered.get(key)
        if cached is None or self.charge_every_call:
            w = self._graph.weight(u, v)
            if self.budget is not None and self.cost + w > self.budget + COST_TOLERANCE:
                raise BudgetExceeded(f"query ({u}, {v}) costs {w}, spent {self.cost} of {self.budget}")
            self.cost += w
            self.query_count += 1
            if cached is None:
                cached = self._graph.relation(key[0], key[1])
                self._answered[key] = cached
        return cached if u == key[0] else cached.flipped()

    def report(self) -> Dict[str, float]:
        return {'query_count': self.query_count, 'cost': self.cost}

    def __repr__(self) -> str:
        return f"OracleSession(queries={self.query_count}, cost={self.cost:.3f})"


class _DelegatingView(SessionView):
    def __init__(self, parent: SessionView):
        self._parent = parent

    @property
    def root(self) -> OracleSession:
        return self._parent.root

    @property
    def parent(self) -> SessionView:
        return self._parent


class InducedSession(_DelegatingView):
    """Only edges with both endpoints inside the subset are visible"""

    def __init__(self, parent: SessionView, subset: Iterable[int]):
        visible = set(parent.vertices)
        if isinstance(parent, InducedSession):
            parent = parent.parent
        super().__init__(parent)
        members = {int(v) for v in subset}
        stray = members - visible
        if stray:
            raise ValueError(f"subset contains vertices outside the parent view: {sorted(stray)[:5]}")
        self._members = frozenset(members)
        self._vertices = tuple(sorted(members))

    @property
    def vertices(self) -> Tuple[int, ...]:
        return self._vertices

    def __contains__(self, v: int) -> bool:
        return v in self._members

    def has_edge(self, u: int, v: int) -> bool:
        return u in self._members and v in self._members and self._parent.has_edge(u, v)

    def neighbors(self, u: int) -> Tuple[int, ...]:
        if u not in self._members:
            return ()
        return tuple(v for v in self._parent.neighbors(u) if v in self._members)

    def query(self, u: int, v: int) -> Relation:
        if not self.has_edge(u, v):
            raise NotAnEdge(f"({u}, {v}) is not an edge of the induced view")
        return self._parent.query(u, v)


class ReversedSession(_DelegatingView):
    """Same edges with every answer negated: Less and Greater swap"""

    @property
    def vertices(self) -> Tuple[int, ...]:
        return self._parent.vertices

    def has_edge(self, u: int, v: int) -> bool:
        return self._parent.has_edge(u, v)

    def neighbors(self, u: int) -> Tuple[int, ...]:
        return self._parent.neighbors(u)

    def query(self, u: int, v: int) -> Relation:
        return self._parent.query(u, v).flipped()

    def known(self, u: int, v: int) -> Optional[Relation]:
        rel = self._parent.known(u, v)
        return None if rel is None else rel.flipped()

    def reversed(self) -> SessionView:
        return self._parent


class WeightFilteredSession(_DelegatingView):
    """Only edges whose weight is at most max_weight are visible"""

    def __init__(self, parent: SessionView, max_weight: float):
        super().__init__(parent)
        self.max_weight = float(max_weight)

    @property
    def vertices(self) -> Tuple[int, ...]:
        return self._parent.vertices

    def has_edge(self, u: int, v: int) -> bool:
        return self._parent.has_edge(u, v) and self.weight(u, v) <= self.max_weight

    def neighbors(self, u: int) -> Tuple[int, ...]:
        return tuple(v for v in self._parent.neighbors(u) if self.weight(u, v) <= self.max_weight)

    def query(self, u: int, v: int) -> Relation:
        if not self.has_edge(u, v):
            raise NotAnEdge(f"({u}, {v}) is not an edge with weight <= {self.max_weight}")
        return self._parent.query(u, v)


class BudgetedSession(_DelegatingView):
    """Caps the cost charged through this view; the root meter still sees every charge"""

    def __init__(self, parent: SessionView, budget: float):
        super().__init__(parent)
        self.budget = float(budget)
        self.spent = 0.0

    @property
    def vertices(self) -> Tuple[int, ...]:
        return self._parent.vertices

    def has_edge(self, u: int, v: int) -> bool:
        return self._parent.has_edge(u, v)

    def neighbors(self, u: int) -> Tuple[int, ...]:
        return self._parent.neighbors(u)

    def query(self, u: int, v: int) -> Relation:
        if self.has_edge(u, v):
            w = self.root.pending_cost(u, v)
            if self.spent + w > self.budget + COST_TOLERANCE:
                raise BudgetExceeded(f"query ({u}, {v}) costs {w}, spent {self.spent} of {self.budget}")
        before = self.root.cost
        rel = self._parent.query(u, v)
        self.spent += self.root.cost - before
        return rel


def induced_session(session: SessionView, subset: Iterable[int]) -> InducedSession:
    """View of the session exposing only edges inside the subset"""
    return session.induced(subset)


def report(session: SessionView) -> Dict[str, float]:
    """Snapshot of the session meter"""
    return session.report()


def query(session: SessionView, u: int, v: int) -> Relation:
    """Ask the oracle for the relation of u to v"""
    return session.query(u, v)
