"""
GPSC Solver - Sorting when every query edge joins a comparable pair
Builds a direction predictor whose per-vertex error is small, then inserts
vertices one at a time, verifying each one's predicted in-edges with binary
searches over chains of already known relations.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from oracle import QueryGraph, SessionView
from poset_core import ChainCover, Dag, Poset, Relation, add_relation, topological_key, transitive_closure
from utils import CycleInKnownEdges, ModelMismatch, TooLarge, sorted_pair

logger = logging.getLogger(__name__)

DEFAULT_EXACT_CAP = 20
# 20! is the largest factorial below 2**64
EXACT_LIMIT = 20
AUTO_EXACT_MAX = 14
RANK_BATCH = 32
DEFAULT_RANK_SAMPLES = 200
DEFAULT_SAMPLE_FACTOR = 4.0

Direction = Tuple[int, int]


# ===================== EXTENSION COUNTING =====================

def _predecessor_masks(n: int, edges: Iterable[Tuple[int, int]]) -> List[int]:
    masks = [0] * n
    for a, b in edges:
        masks[b] |= 1 << a
    return masks


def _extension_tables(n: int, pred: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Forward and backward counts over down-closed subsets.

    f[S] counts the orderings of S as a prefix; g[S] counts the orderings of
    the complement placed after S. Both are zero on subsets that are not
    down-closed.
    """
    size = 1 << n
    masks = np.arange(size, dtype=np.int64)
    valid = np.ones(size, dtype=bool)
    popcount = np.zeros(size, dtype=np.int64)
    for u in range(n):
        has = ((masks >> u) & 1).astype(bool)
        popcount += has
        valid &= ~has | ((masks & pred[u]) == pred[u])
    layers = [masks[valid & (popcount == c)] for c in range(n + 1)]

    f = np.zeros(size, dtype=np.uint64)
    f[0] = 1
    for c in range(1, n + 1):
        layer = layers[c]
        acc = np.zeros(len(layer), dtype=np.uint64)
        for u in range(n):
            bit = 1 << u
            sel = ((layer & bit) != 0) & (((layer ^ bit) & pred[u]) == pred[u])
            acc[sel] += f[layer[sel] ^ bit]
        f[layer] = acc

    g = np.zeros(size, dtype=np.uint64)
    g[size - 1] = 1
    for c in range(n - 1, -1, -1):
        layer = layers[c]
        acc = np.zeros(len(layer), dtype=np.uint64)
        for u in range(n):
            bit = 1 << u
            sel = ((layer & bit) == 0) & ((layer & pred[u]) == pred[u])
            acc[sel] += g[layer[sel] | bit]
        g[layer] = acc

    return masks, valid, f, g


def _pair_counts(n: int, pred: Sequence[int]) -> np.ndarray:
    """counts[u, v] = number of feasible extensions placing u before v"""
    masks, valid, f, g = _extension_tables(n, pred)
    downsets = masks[valid]
    counts = np.zeros((n, n), dtype=np.uint64)
    for u in range(n):
        bit = 1 << u
        sel = ((downsets & bit) == 0) & ((downsets & pred[u]) == pred[u])
        before = downsets[sel]
        weight = f[before] * g[before | bit]
        for v in range(n):
            if v != u:
                counts[u, v] = weight[((before >> v) & 1) == 0].sum()
    return counts


def _knuth_estimate(n: int, edges: Sequence[Tuple[int, int]], samples: int, rng: np.random.Generator) -> float:
    """Mean over random greedy extensions of the product of available choices"""
    successors: List[List[int]] = [[] for _ in range(n)]
    indegree = np.zeros(n, dtype=np.int64)
    for a, b in edges:
        successors[a].append(b)
        indegree[b] += 1

    total = 0.0
    for _ in range(samples):
        remaining = indegree.copy()
        available = [v for v in range(n) if remaining[v] == 0]
        product = 1.0
        while available:
            product *= len(available)
            idx = int(rng.integers(len(available)))
            available[idx], available[-1] = available[-1], available[idx]
            v = available.pop()
            for w in successors[v]:
                remaining[w] -= 1
                if remaining[w] == 0:
                    available.append(w)
        total += product
    return total / samples


def count_feasible_extensions(n: int, known_edges: Iterable[Tuple[int, int]], exact_cap: int = DEFAULT_EXACT_CAP,
                              sampling: bool = False, samples: int = DEFAULT_RANK_SAMPLES,
                              rng: Optional[np.random.Generator] = None) -> int:
    """
    Number of permutations of [0, n) that respect every known edge.

    Exact through the down-set dynamic program up to exact_cap elements,
    never beyond EXACT_LIMIT where uint64 counts would wrap; above it a
    sampled estimate is returned when sampling is requested.
    """
    edges = sorted({(int(a), int(b)) for a, b in known_edges})
    graph = nx.DiGraph()
    graph.add_nodes_from(range(n))
    graph.add_edges_from(edges)
    if not nx.is_directed_acyclic_graph(graph):
        raise CycleInKnownEdges(f"known edges on {n} vertices contain a cycle")
    if n == 0:
        return 1
    cap = min(exact_cap, EXACT_LIMIT)
    if n > cap:
        if not sampling:
            raise TooLarge(f"exact counting is capped at {cap} elements, got {n}")
        return int(round(_knuth_estimate(n, edges, samples, rng or np.random.default_rng())))
    if sampling:
        return int(round(_knuth_estimate(n, edges, samples, rng or np.random.default_rng())))

    _, _, f, _ = _extension_tables(n, _predecessor_masks(n, edges))
    return int(f[(1 << n) - 1])


def predict_edge(u: int, v: int, known_edges: Iterable[Tuple[int, int]], n: int,
                 exact_cap: int = DEFAULT_EXACT_CAP) -> Direction:
    """Orientation of (u, v) that leaves more feasible extensions; ties go lower id first"""
    known = list(known_edges)

    def count(extra: Tuple[int, int]) -> int:
        try:
            return count_feasible_extensions(n, known + [extra], exact_cap)
        except CycleInKnownEdges:
            return 0

    forward, backward = count((u, v)), count((v, u))
    if forward == backward:
        return sorted_pair(u, v)
    return (u, v) if forward > backward else (v, u)


# ===================== PREDICTOR =====================

@dataclass
class Predictor:
    """Predicted orientation (tail, head) for every query edge"""
    direction: Dict[Tuple[int, int], Direction]
    beta: int
    mode: str = 'exact'
    construction_queries: int = 0
    _incoming: Dict[int, List[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        incoming: Dict[int, List[int]] = {}
        for tail, head in self.direction.values():
            incoming.setdefault(head, []).append(tail)
        self._incoming = {v: sorted(tails) for v, tails in incoming.items()}

    def predicted_in(self, u: int) -> List[int]:
        return self._incoming.get(u, [])

    def wrong_counts(self, graph: QueryGraph) -> np.ndarray:
        """Mispredicted incident edges per vertex (needs ground truth)"""
        counts = np.zeros(graph.n, dtype=np.int64)
        less = graph.truth.less
        for (u, v), (tail, head) in self.direction.items():
            if not less[tail, head]:
                counts[u] += 1
                counts[v] += 1
        return counts

    def to_json(self) -> Dict[str, Any]:
        return {
            'beta': self.beta,
            'mode': self.mode,
            'construction_queries': self.construction_queries,
            'edges': [[tail, head] for _, (tail, head) in sorted(self.direction.items())],
        }


def oracle_predictor(graph: QueryGraph) -> Predictor:
    """Predictor reading every direction from the ground truth"""
    direction = {edge: (edge if graph.truth.less[edge] else (edge[1], edge[0])) for edge in graph.edges}
    return Predictor(direction, beta=0, mode='oracle')


def dump_predictor(predictor: Predictor, graph: QueryGraph) -> str:
    """JSON audit of a predictor: directions plus per-vertex wrong counts"""
    data = predictor.to_json()
    wrong = predictor.wrong_counts(graph)
    data['wrong_counts'] = [int(c) for c in wrong]
    data['max_wrong'] = int(wrong.max()) if len(wrong) else 0
    return json.dumps(data, sort_keys=True)


class _KnownRelations:
    """Closed matrix of verified relations plus the query path that feeds it"""

    def __init__(self, session: SessionView):
        self.session = session
        oriented = set()
        for u, v in session.edges():
            rel = session.known(u, v)
            if rel is Relation.LESS:
                oriented.add((u, v))
            elif rel is Relation.GREATER:
                oriented.add((v, u))
        closure = transitive_closure(Dag(session.graph.n, frozenset(oriented)))
        self.less = np.array(closure.less, dtype=bool)

    def relation(self, u: int, v: int) -> Relation:
        """Known relation of u to v, querying the edge when it is still open"""
        if self.less[u, v]:
            return Relation.LESS
        if self.less[v, u]:
            return Relation.GREATER
        rel = self.session.query(u, v)
        if rel is Relation.LESS:
            add_relation(self.less, u, v)
        elif rel is Relation.GREATER:
            add_relation(self.less, v, u)
        else:
            raise ModelMismatch(f"edge ({u}, {v}) joins an incomparable pair")
        return rel


def _repredict(vertices: Sequence[int], edges: Sequence[Tuple[int, int]], known: np.ndarray, mode: str,
               rank_samples: int, rng: np.random.Generator) -> Dict[Tuple[int, int], Direction]:
    """Predict every edge from the currently known relations"""
    idx = np.asarray(vertices, dtype=np.int64)
    local = known[np.ix_(idx, idx)]
    m = len(vertices)
    if not edges:
        return {}
    ends = np.asarray(edges, dtype=np.int64)
    position = np.full(known.shape[0], -1, dtype=np.int64)
    position[idx] = np.arange(m)
    a, b = position[ends[:, 0]], position[ends[:, 1]]

    if mode == 'exact':
        pred = [int(sum(1 << int(t) for t in np.flatnonzero(local[:, h]))) for h in range(m)]
        counts = _pair_counts(m, pred)
        guess = counts[a, b] >= counts[b, a]
    else:
        ancestors = local.T | np.eye(m, dtype=bool)
        depth = ancestors.sum(axis=1)
        rank_sum = np.zeros(m, dtype=np.float64)
        for start in range(0, rank_samples, RANK_BATCH):
            batch = min(RANK_BATCH, rank_samples - start)
            x = rng.random((batch, m))
            # each vertex sits at the latest draw among its ancestors
            y = np.where(ancestors[None, :, :], x[:, None, :], -1.0).max(axis=2)
            order = np.lexsort((np.broadcast_to(np.arange(m), (batch, m)), np.broadcast_to(depth, (batch, m)), y))
            rank_sum += np.argsort(order, axis=1).sum(axis=0)
        mean_rank = rank_sum / max(rank_samples, 1)
        guess = mean_rank[a] <= mean_rank[b]

    forward = known[ends[:, 0], ends[:, 1]] | (~known[ends[:, 1], ends[:, 0]] & guess)
    return {(u, v): ((u, v) if fwd else (v, u)) for (u, v), fwd in zip(edges, forward.tolist())}


def build_predictor(session: SessionView, rng: np.random.Generator, mode: str = 'auto',
                    beta_multiplier: float = 1.0, exact_cap: int = DEFAULT_EXACT_CAP,
                    rank_samples: int = DEFAULT_RANK_SAMPLES,
                    disagreement_sample_factor: float = DEFAULT_SAMPLE_FACTOR) -> Predictor:
    """
    Predictor with few wrong edges at every vertex.

    Each vertex is tested with sqrt(n) random incident queries; any wrong
    prediction triggers a global re-prediction and a fresh test. A passing
    vertex freezes its view of its incident edges. Afterwards, while some
    vertex's frozen view disagrees with the global prediction on more than
    2*beta edges, disagreeing edges are queried at random; a wrong global
    prediction triggers re-prediction, a correct one repairs the frozen view.
    """
    vertices = list(session.vertices)
    n = len(vertices)
    start_queries = session.report()['query_count']
    if mode == 'auto':
        mode = 'exact' if n <= min(AUTO_EXACT_MAX, exact_cap) else 'sampling'
    cap = min(exact_cap, EXACT_LIMIT)
    if mode == 'exact' and n > cap:
        raise TooLarge(f"exact prediction is capped at {cap} elements, got {n}")

    beta = int(math.ceil(beta_multiplier * math.sqrt(n) * math.log(n))) if n > 1 else 0
    test_size = int(math.ceil(math.sqrt(n)))
    round_cap = max(1, int(math.ceil(disagreement_sample_factor * math.log(max(n, 2)))))

    known = _KnownRelations(session)
    edges = sorted(session.edges())
    incident: Dict[int, List[Tuple[int, int]]] = {v: [] for v in vertices}
    for u, v in edges:
        incident[u].append((u, v))
        incident[v].append((u, v))

    direction = _repredict(vertices, edges, known.less, mode, rank_samples, rng)
    repredictions = 1

    def verified_direction(edge: Tuple[int, int]) -> Direction:
        u, v = edge
        return (u, v) if known.relation(u, v) is Relation.LESS else (v, u)

    frozen: Dict[int, Dict[Tuple[int, int], Direction]] = {}
    for v in (vertices[int(i)] for i in rng.permutation(n)):
        while True:
            options = incident[v]
            take = min(test_size, len(options))
            picks = rng.choice(len(options), size=take, replace=False) if take else []
            mismatch = False
            for i in picks:
                edge = options[int(i)]
                if verified_direction(edge) != direction[edge]:
                    mismatch = True
                    break
            if not mismatch:
                break
            direction = _repredict(vertices, edges, known.less, mode, rank_samples, rng)
            repredictions += 1
        frozen[v] = {edge: direction[edge] for edge in incident[v]}

    capped_rounds = 0
    while True:
        worst = None
        for v in vertices:
            disagreeing = [e for e in incident[v] if frozen[v][e] != direction[e]]
            if len(disagreeing) > 2 * beta:
                worst = (v, disagreeing)
                break
        if worst is None:
            break
        v, disagreeing = worst
        found_wrong = False
        order = rng.permutation(len(disagreeing))[:round_cap]
        for i in order:
            edge = disagreeing[int(i)]
            truth = verified_direction(edge)
            frozen[v][edge] = truth
            other = edge[0] if edge[1] == v else edge[1]
            if edge in frozen.get(other, {}):
                frozen[other][edge] = truth
            if truth != direction[edge]:
                found_wrong = True
                break
        if found_wrong:
            direction = _repredict(vertices, edges, known.less, mode, rank_samples, rng)
            repredictions += 1
        else:
            capped_rounds += 1
            logger.warning(f"Disagreement round at vertex {v} found no wrong edge in {len(order)} samples")

    queries = session.report()['query_count'] - start_queries
    logger.info(f"Predictor built: n={n}, mode={mode}, beta={beta}, queries={queries}, "
                f"repredictions={repredictions}, capped_rounds={capped_rounds}")
    return Predictor(direction, beta=beta, mode=mode, construction_queries=queries)


# ===================== INCREMENTAL SORT =====================

def min_chain_cover(subset: Iterable[int], known_less: np.ndarray,
                    members: Optional[Iterable[int]] = None) -> List[List[int]]:
    """
    Fewest chains of known relations covering the subset.

    Vertices outside members (when given) are treated as having no known
    relations and become singleton chains.
    """
    verts = sorted({int(v) for v in subset})
    if members is not None:
        allowed = {int(v) for v in members}
        inside = [v for v in verts if v in allowed]
        outside = [v for v in verts if v not in allowed]
    else:
        inside, outside = verts, []

    cover = ChainCover(known_less)
    for v in topological_key(known_less, inside):
        cover.add(v)
    return cover.chains() + [[v] for v in outside]


def _verify_chain(known: _KnownRelations, chain: List[int], u: int) -> None:
    """Resolve u against an ascending chain: a Less prefix, then Greater"""
    if len(chain) == 1:
        known.relation(chain[0], u)
        return
    lo, hi = 0, len(chain)
    while lo < hi:
        mid = (lo + hi) // 2
        if known.relation(chain[mid], u) is Relation.LESS:
            lo = mid + 1
        else:
            hi = mid


def gpsc_sort(session: SessionView, rng: np.random.Generator, predictor: Optional[Predictor] = None,
              stats: Optional[Dict[str, Any]] = None, **predictor_options) -> Poset:
    """
    Recover the poset of a GPSC instance.

    Repeatedly inserts the unsorted vertex whose predicted in-neighbours split
    into the fewest chains of known relations (ties: fewer predicted
    in-neighbours, then lower id), resolving each chain by binary search.
    Every edge is the predicted in-edge of exactly one endpoint, so once all
    vertices are inserted every edge is resolved.
    """
    if predictor is None:
        predictor = build_predictor(session, rng, **predictor_options)
    after_predictor = session.report()['query_count']

    known = _KnownRelations(session)
    remaining = set(session.vertices)
    incoming = {u: [w for w in predictor.predicted_in(u) if session.has_edge(w, u)] for u in remaining}
    incoming_sets = {u: set(ws) for u, ws in incoming.items()}
    covers: Dict[int, List[List[int]]] = {}
    max_chains = 0
    inserts: List[Dict[str, int]] = []

    while remaining:
        best_key, best = None, None
        for u in sorted(remaining):
            if u not in covers:
                covers[u] = min_chain_cover(incoming[u], known.less)
            key = (len(covers[u]), len(incoming[u]), u)
            if best_key is None or key < best_key:
                best_key, best = key, u

        chains = covers.pop(best)
        max_chains = max(max_chains, len(chains))
        before = known.less.copy()
        spent = session.report()['query_count']
        for chain in chains:
            _verify_chain(known, chain, best)
        inserts.append({'vertex': best, 'chains': len(chains), 'queries': session.report()['query_count'] - spent})
        remaining.discard(best)

        changed = known.less & ~before
        changed[best, :] = False
        changed[:, best] = False
        if changed.any():
            covers.clear()
        else:
            for u in list(covers):
                if best in incoming_sets[u]:
                    del covers[u]

    sort_queries = session.report()['query_count'] - after_predictor
    if stats is not None:
        stats['predictor_queries'] = predictor.construction_queries
        stats['sort_queries'] = sort_queries
        stats['max_chains'] = max_chains
        stats['max_insert_queries'] = max((i['queries'] for i in inserts), default=0)
        stats['inserts'] = inserts
        stats['beta'] = predictor.beta
    logger.info(f"gpsc_sort: n={len(session.vertices)}, predictor queries={predictor.construction_queries}, "
                f"sort queries={sort_queries}, max chains per insert={max_chains}")
    return Poset(known.less, validate=False)
