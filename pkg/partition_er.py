"""
ER Partition - Vertex-skipping BFS for random query graphs
Finds the down-set and up-set of a pivot by a level-synchronous BFS whose
frontier vertices retire once enough same-level vertices have hit them.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx
import numpy as np

from framework import PartitionOracle, PartitionResult, gps_solve
from oracle import QueryGraph, SessionView
from poset_core import Poset, Relation, width
from utils import InconsistentExtension

logger = logging.getLogger(__name__)

DEFAULT_R_MULTIPLIER = 18.0


@dataclass
class SkipBfsState:
    """Level sets, health counters and trace of one Skip-BFS run"""
    pivot: int
    r: int
    n_orig: int
    levels: List[List[int]] = field(default_factory=list)
    counters: Dict[int, int] = field(default_factory=dict)
    explored: int = 0
    skipped: int = 0
    trace: Optional[List[Dict[str, Any]]] = None

    def found(self) -> FrozenSet[int]:
        return frozenset(v for level in self.levels[1:] for v in level)

    def record(self, level: int, vertex: int, action: str, hits: Optional[List[int]] = None) -> None:
        """Trace entry; explored entries list the same-level vertices they hit"""
        if self.trace is None:
            return
        entry: Dict[str, Any] = {'level': level, 'vertex': vertex, 'action': action,
                                 'counter': self.counters.get(vertex, self.r)}
        if hits is not None:
            entry['hits'] = hits
        self.trace.append(entry)


def skip_threshold(k: int, n_orig: int, r_multiplier: float = DEFAULT_R_MULTIPLIER) -> int:
    """R = k + multiplier * ln N, rounded up"""
    return k + int(math.ceil(r_multiplier * math.log(max(n_orig, 2))))


def skip_bfs_state(session: SessionView, pivot: int, k: int, n_orig: int, rng: np.random.Generator,
                   r_multiplier: float = DEFAULT_R_MULTIPLIER, record_trace: bool = False) -> SkipBfsState:
    """
    Run Skip-BFS toward the pivot and keep the full state.

    Level 1 holds the queried in-neighbours of the pivot. Each level is
    processed in random order; a live vertex queries every edge to vertices not
    in an earlier level, charges a hit to each same-level vertex found below
    it, and pushes new lower vertices to the next level. Pairs without a query
    edge are never asked.
    """
    state = SkipBfsState(pivot=pivot, r=skip_threshold(k, n_orig, r_multiplier), n_orig=n_orig,
                         trace=[] if record_trace else None)
    level_of: Dict[int, int] = {pivot: 0}
    state.levels.append([pivot])

    first = []
    for u in session.neighbors(pivot):
        if session.query(u, pivot) is Relation.LESS:
            first.append(u)
            level_of[u] = 1
    state.levels.append(sorted(first))

    ell = 1
    while ell < len(state.levels) and state.levels[ell]:
        frontier = state.levels[ell]
        following: List[int] = []
        for idx in rng.permutation(len(frontier)):
            v = frontier[int(idx)]
            if state.counters.get(v, state.r) <= 0:
                state.skipped += 1
                state.record(ell, v, 'skipped')
                continue
            state.explored += 1
            hits: List[int] = []
            for u in session.neighbors(v):
                seen = level_of.get(u)
                if seen is not None and seen < ell:
                    continue
                if session.query(u, v) is not Relation.LESS:
                    continue
                if seen == ell:
                    state.counters[u] = state.counters.get(u, state.r) - 1
                    hits.append(u)
                elif seen is None:
                    level_of[u] = ell + 1
                    following.append(u)
            state.record(ell, v, 'explored', hits)
        if following:
            state.levels.append(following)
        ell += 1

    return state


def write_trace(state: SkipBfsState, path) -> Path:
    """Write a recorded trace as JSON lines, one entry per processed vertex"""
    if state.trace is None:
        raise ValueError("state was built without record_trace")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for entry in state.trace:
            f.write(json.dumps(entry) + '\n')
    logger.info(f"Wrote {len(state.trace)} trace entries for pivot {state.pivot} to {path}")
    return path


def skip_bfs(session: SessionView, pivot: int, k: int, n_orig: int, rng: np.random.Generator,
             r_multiplier: float = DEFAULT_R_MULTIPLIER) -> FrozenSet[int]:
    """Vertices Skip-BFS finds below the pivot"""
    return skip_bfs_state(session, pivot, k, n_orig, rng, r_multiplier).found()


def partition_er(session: SessionView, pivot: int, k: int, n_orig: int, rng: np.random.Generator,
                 r_multiplier: float = DEFAULT_R_MULTIPLIER,
                 stats: Optional[Dict[str, int]] = None) -> PartitionResult:
    """Down-set by Skip-BFS, up-set by Skip-BFS on the reversed relation, the rest incomparable"""
    down = skip_bfs_state(session, pivot, k, n_orig, rng, r_multiplier)
    up = skip_bfs_state(session.reversed(), pivot, k, n_orig, rng, r_multiplier)
    less, greater = down.found(), up.found()
    incomparable = frozenset(session.vertices) - less - greater - {pivot}

    if stats is not None:
        stats['partition_calls'] = stats.get('partition_calls', 0) + 1
        stats['explored'] = stats.get('explored', 0) + down.explored + up.explored
        stats['levels_skipped'] = stats.get('levels_skipped', 0) + down.skipped + up.skipped
    return PartitionResult(less, incomparable, greater)


def make_er_partition(k: int, n_orig: int, r_multiplier: float = DEFAULT_R_MULTIPLIER,
                      stats: Optional[Dict[str, int]] = None) -> PartitionOracle:
    """Partition oracle bound to a width parameter and original instance size"""
    def partition(session: SessionView, pivot: int, rng: np.random.Generator) -> PartitionResult:
        return partition_er(session, pivot, k, n_orig, rng, r_multiplier, stats)
    return partition


def true_levels(graph: QueryGraph, pivot: int, subset: Optional[Iterable[int]] = None) -> List[Set[int]]:
    """
    Ground-truth BFS levels toward the pivot over oriented query edges.

    Level l holds the vertices whose shortest directed path to the pivot has
    l edges; only vertices in the subset (default: all) take part.
    """
    members = set(range(graph.n)) if subset is None else {int(v) for v in subset}
    directed = nx.DiGraph()
    directed.add_nodes_from(members)
    directed.add_edges_from((u, v) for u, v in graph.oriented_edges() if u in members and v in members)
    distances = nx.single_source_shortest_path_length(directed.reverse(copy=False), pivot)
    levels: List[Set[int]] = [set() for _ in range(max(distances.values()) + 1)]
    for v, d in distances.items():
        levels[d].add(v)
    return levels


def levels_match(state: SkipBfsState, graph: QueryGraph, subset: Optional[Iterable[int]] = None) -> bool:
    """Every level Skip-BFS built equals the true BFS level"""
    expected = true_levels(graph, state.pivot, subset)
    found = [set(level) for level in state.levels if level]
    return found == expected


def width_doubling(session: SessionView, rng: np.random.Generator, n_orig: Optional[int] = None,
                   r_multiplier: float = DEFAULT_R_MULTIPLIER,
                   stats: Optional[Dict[str, int]] = None) -> Tuple[Poset, int]:
    """
    Sort without knowing the width: try k = 1, 2, 4, ...

    Stops once two consecutive rounds recover the same poset and its width fits
    the current k, or once k reaches the number of vertices. Answers are cached
    by the session, so later rounds mostly reuse earlier queries.
    """
    n_orig = n_orig or session.graph.n
    limit = max(len(session.vertices), 1)
    previous: Optional[Poset] = None
    k = 1
    while True:
        try:
            poset = gps_solve(session, make_er_partition(k, n_orig, r_multiplier, stats), rng)
        except InconsistentExtension as exc:
            logger.debug(f"width_doubling: k={k} produced an inconsistent extension ({exc})")
            poset = None
        recovered = width(poset) if poset is not None else None
        logger.debug(f"width_doubling: k={k}, recovered width {recovered}")
        settled = previous is not None and poset == previous and recovered <= k
        if poset is not None and (settled or k >= limit):
            if stats is not None:
                stats['k_final'] = k
            return poset, k
        previous = poset
        k *= 2
