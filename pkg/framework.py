"""
Sorting Framework - From partition oracles to the full poset
Random-pivot recursion that turns any partition oracle into a linear extension,
and incremental insertion that recovers every relation from that extension.
"""

import logging
from dataclasses import dataclass
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from oracle import SessionView
from poset_core import ChainCover, LinearExtension, Poset, Relation
from utils import InconsistentExtension, PerformanceMonitor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionResult:
    """Three-way split of a vertex subset around a pivot"""
    less: FrozenSet[int]
    incomparable: FrozenSet[int]
    greater: FrozenSet[int]

    def covers(self, subset: Iterable[int], pivot: int) -> bool:
        """The three parts and the pivot partition the subset"""
        parts = (self.less, self.incomparable, self.greater)
        if any(a & b for i, a in enumerate(parts) for b in parts[i + 1:]):
            return False
        union = self.less | self.incomparable | self.greater
        return pivot not in union and union | {pivot} == frozenset(subset)


PartitionOracle = Callable[[SessionView, int, np.random.Generator], PartitionResult]


def part_to_le(session: SessionView, partition: PartitionOracle, rng: np.random.Generator,
               vertices: Optional[Sequence[int]] = None) -> LinearExtension:
    """
    Linear extension from a partition oracle by random-pivot recursion.

    Each subset is split around a uniformly random pivot and emitted as
    LE(less) + pivot + LE(incomparable) + LE(greater). The recursion runs on an
    explicit stack.
    """
    members = tuple(sorted(session.vertices if vertices is None else vertices))
    output: List[int] = []
    stack: List[tuple] = [('solve', members)]
    calls = 0

    while stack:
        kind, item = stack.pop()
        if kind == 'emit':
            output.append(item)
            continue
        subset = item
        if not subset:
            continue
        if len(subset) == 1:
            output.append(subset[0])
            continue

        pivot = int(subset[rng.integers(len(subset))])
        view = session.induced(subset)
        result = partition(view, pivot, rng)
        calls += 1
        if not result.covers(subset, pivot):
            raise InconsistentExtension(f"partition around {pivot} does not split its subset of {len(subset)}")
        logger.debug(f"pivot {pivot}: |L|={len(result.less)} |M|={len(result.incomparable)} "
                     f"|R|={len(result.greater)}")

        stack.append(('solve', tuple(sorted(result.greater))))
        stack.append(('solve', tuple(sorted(result.incomparable))))
        stack.append(('emit', pivot))
        stack.append(('solve', tuple(sorted(result.less))))

    logger.debug(f"part_to_le: {calls} partition calls for {len(members)} vertices")
    return LinearExtension(tuple(output))


def _last_less(session: SessionView, positions: List[int], v: int) -> int:
    """Index of the last position answering Less against v, -1 if none"""
    lo, hi = 0, len(positions)
    while lo < hi:
        mid = (lo + hi) // 2
        rel = session.query(positions[mid], v)
        if rel is Relation.GREATER:
            raise InconsistentExtension(f"{positions[mid]} lies above {v}, which comes later in the extension")
        if rel is Relation.LESS:
            lo = mid + 1
        else:
            hi = mid
    return lo - 1


def _first_greater(session: SessionView, positions: List[int], v: int, start: int) -> int:
    """Index of the first position at or after start answering Greater, len(positions) if none"""
    lo, hi = start, len(positions)
    while lo < hi:
        mid = (lo + hi) // 2
        rel = session.query(positions[mid], v)
        if rel is Relation.GREATER:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _audit_chain(session: SessionView, chain: List[int], v: int) -> None:
    """Along a chain the relation to v is a Less-prefix, then Incomparable, then Greater"""
    truth = session.graph.truth
    codes = [truth.relation(w, v) for w in chain]
    stage = {Relation.LESS: 0, Relation.INCOMPARABLE: 1, Relation.GREATER: 2}
    steps = [stage[c] for c in codes]
    if steps != sorted(steps):
        raise InconsistentExtension(f"relations along chain {chain[:5]}... to {v} are not monotone")


@PerformanceMonitor.timer
def gps_from_le(session: SessionView, le: LinearExtension, audit: bool = False) -> Poset:
    """
    Recover the poset from one of its linear extensions.

    Vertices are inserted in extension order. The inserted prefix is kept as a
    minimum chain cover of its known relations; for each chain, a binary search
    over the chain positions that share a query edge with the new vertex finds
    the Less boundary, and a second search confirms nothing above it. The new
    vertex inherits the down-sets of every Less hit. Relations without a query
    edge come from the closure.

    The returned poset is indexed by the graph's vertex ids; vertices outside
    the session stay isolated.
    """
    size = session.graph.n
    known = np.zeros((size, size), dtype=bool)
    cover = ChainCover(known)
    searches = 0

    for v in le:
        below = np.zeros(size, dtype=bool)
        for chain in cover.chains():
            if audit:
                _audit_chain(session, chain, v)
            positions = [w for w in chain if session.has_edge(w, v)]
            if not positions:
                continue
            searches += 1
            last = _last_less(session, positions, v)
            upper = _first_greater(session, positions, v, last + 1)
            if upper < len(positions):
                raise InconsistentExtension(f"{positions[upper]} lies above {v}, which comes later in the extension")
            if last >= 0:
                hit = positions[last]
                below |= known[:, hit]
                below[hit] = True
        known[:, v] = below
        cover.add(v)

    logger.debug(f"gps_from_le: {len(le)} insertions, {searches} chain searches, final width {cover.size}")
    return Poset(known, validate=False)


def naive_partition(session: SessionView, pivot: int, rng: Optional[np.random.Generator] = None) -> PartitionResult:
    """Query the pivot against every other vertex directly"""
    less, incomparable, greater = set(), set(), set()
    for u in session.vertices:
        if u == pivot:
            continue
        rel = session.query(u, pivot)
        if rel is Relation.LESS:
            less.add(u)
        elif rel is Relation.GREATER:
            greater.add(u)
        else:
            incomparable.add(u)
    return PartitionResult(frozenset(less), frozenset(incomparable), frozenset(greater))


def gps_solve(session: SessionView, partition: PartitionOracle, rng: np.random.Generator,
              audit: bool = False) -> Poset:
    """Full pipeline: linear extension through the partition oracle, then recovery"""
    le = part_to_le(session, partition, rng)
    after_le = dict(session.report())
    poset = gps_from_le(session, le, audit=audit)
    report = session.report()
    logger.info(f"gps_solve: n={len(le)}, queries={report['query_count']} "
                f"(extension {after_le['query_count']}, recovery {report['query_count'] - after_le['query_count']})")
    return poset


def partition_result_from_poset(poset: Poset, subset: Iterable[int], pivot: int) -> PartitionResult:
    """Ground-truth split of a subset around a pivot"""
    less, incomparable, greater = set(), set(), set()
    for u in subset:
        u = int(u)
        if u == pivot:
            continue
        if poset.less[u, pivot]:
            less.add(u)
        elif poset.less[pivot, u]:
            greater.add(u)
        else:
            incomparable.add(u)
    return PartitionResult(frozenset(less), frozenset(incomparable), frozenset(greater))

