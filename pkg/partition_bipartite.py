"""
Bipartite Partition - Las Vegas pivot partition on complete bipartite query graphs
FindMin walks down to a locally minimal vertex; FindLarge repeats it to
recover every vertex above the pivot. Both answers are always exact.
"""

import logging
from typing import Dict, FrozenSet, Iterable, List, Optional

import numpy as np

from framework import PartitionOracle, PartitionResult
from oracle import SessionView
from poset_core import Relation
from utils import EmptyInput, InconsistentExtension

logger = logging.getLogger(__name__)


def side_size(session: SessionView) -> int:
    """Vertices below this id form side A, the rest side B"""
    n_a = session.graph.params.get('nA')
    if n_a is None:
        raise ValueError("bipartite partition needs an instance with an 'nA' parameter")
    return int(n_a)


def _take_random(pool: List[int], rng: np.random.Generator) -> int:
    idx = int(rng.integers(len(pool)))
    pool[idx], pool[-1] = pool[-1], pool[idx]
    return pool.pop()


def find_min(session: SessionView, first_side: Iterable[int], other_side: Iterable[int],
             rng: np.random.Generator, stats: Optional[Dict[str, int]] = None) -> int:
    """
    Random walk down to a vertex with nothing smaller left in first_side + other_side.

    Starts from a uniform vertex of first_side. While the side opposite the
    current vertex still has candidates, one is drawn uniformly and removed;
    the walk moves to it when it is smaller. Every drawn pair crosses sides,
    so each step is one query edge.
    """
    pools = {0: sorted(first_side), 1: sorted(other_side)}
    if not pools[0]:
        raise EmptyInput("find_min needs at least one start vertex")

    current = _take_random(pools[0], rng)
    current_side = 0
    steps = 0
    while pools[1 - current_side]:
        candidate = _take_random(pools[1 - current_side], rng)
        steps += 1
        if session.query(candidate, current) is Relation.LESS:
            current = candidate
            current_side = 1 - current_side

    if stats is not None:
        stats['find_min_calls'] = stats.get('find_min_calls', 0) + 1
        stats['find_min_steps'] = stats.get('find_min_steps', 0) + steps
    return current


def _above(session: SessionView, v: int, candidates: Iterable[int]) -> List[int]:
    return [u for u in candidates if session.query(v, u) is Relation.LESS]


def find_large(session: SessionView, pivot: int, rng: np.random.Generator,
               stats: Optional[Dict[str, int]] = None) -> FrozenSet[int]:
    """
    Every vertex above the pivot.

    Opposite-side vertices above the pivot are found by direct queries. The
    pivot's own side is grown by repeated find_min calls: an opposite-side
    result contributes the same-side vertices above it and leaves the pool; a
    same-side result removes the opposite-side vertices above it.
    """
    n_a = side_size(session)
    pivot_on_a = pivot < n_a
    opposite = [v for v in session.vertices if (v < n_a) != pivot_on_a]
    same = [v for v in session.vertices if (v < n_a) == pivot_on_a and v != pivot]

    opposite_above = set(_above(session, pivot, opposite))
    remaining = set(opposite_above)
    same_above: set = set()
    rounds = 0

    while remaining:
        rounds += 1
        found = find_min(session, remaining, same_above, rng, stats)
        if (found < n_a) != pivot_on_a:
            remaining.discard(found)
            same_above.update(_above(session, found, [b for b in same if b not in same_above]))
        else:
            dominated = _above(session, found, remaining)
            if not dominated:
                raise InconsistentExtension(f"find_min returned {found} with nothing above it left in the pool")
            remaining.difference_update(dominated)

    if stats is not None:
        stats['find_large_rounds'] = stats.get('find_large_rounds', 0) + rounds
    logger.debug(f"find_large({pivot}): {len(opposite_above)} opposite, {len(same_above)} same side, {rounds} rounds")
    return frozenset(opposite_above | same_above)


def partition_bipartite(session: SessionView, pivot: int, rng: np.random.Generator,
                        stats: Optional[Dict[str, int]] = None) -> PartitionResult:
    """Up-set by find_large, down-set by find_large on the reversed relation"""
    greater = find_large(session, pivot, rng, stats)
    less = find_large(session.reversed(), pivot, rng, stats)
    incomparable = frozenset(session.vertices) - less - greater - {pivot}
    if stats is not None:
        stats['partition_calls'] = stats.get('partition_calls', 0) + 1
    return PartitionResult(less, incomparable, greater)


def make_bipartite_partition(stats: Optional[Dict[str, int]] = None) -> PartitionOracle:
    """Partition oracle for complete bipartite instances"""
    def partition(session: SessionView, pivot: int, rng: np.random.Generator) -> PartitionResult:
        return partition_bipartite(session, pivot, rng, stats)
    return partition
