"""
Instance Generator - Seeded query-graph instances for every model
ER, complete bipartite, comparable-only (GPSC) and weighted total orders.
Each generator yields a graph whose oriented edges close to the ground truth.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Set, Tuple

import numpy as np

from oracle import QueryGraph
from poset_core import Dag, Poset, transitive_closure, width
from utils import InputValidator, Unsatisfiable, derive_seed, sorted_pair

logger = logging.getLogger(__name__)

DEFAULT_CROSS_FACTOR = 2.0
MAX_WIDTH_RETRIES = 8
UNIFORM_LOG_RATIO = 4.0


@dataclass
class GenParams:
    """Parameters of one generated instance"""
    model: str = 'er'
    n: Optional[int] = None
    k: Optional[int] = None
    p: Optional[float] = None
    W: Optional[int] = None
    seed: int = 0
    nA: Optional[int] = None
    nB: Optional[int] = None
    density: Optional[float] = None
    extra_edge_prob: Optional[float] = None
    gap_profile: str = 'uniform-log'

    def validate(self) -> None:
        InputValidator.validate_gen_params(asdict(self))

    def to_dict(self) -> Dict[str, Any]:
        return {key: value for key, value in asdict(self).items() if value is not None}


def random_poset(n: int, k: int, seed: Optional[int] = None, cross_prob: Optional[float] = None) -> Poset:
    """
    Random poset of width exactly k.

    Vertices are laid along a random global order and dealt into k nonempty
    chains; cross relations between chains follow the global order, so the
    result is acyclic. Cross relations are resampled with halved probability
    until the width check passes, falling back to disjoint chains.
    """
    if k < 1 or n < 1:
        raise Unsatisfiable(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    if k > n:
        raise Unsatisfiable(f"width {k} is impossible with {n} elements")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    labels = rng.integers(0, k, size=n)
    labels[rng.choice(n, size=k, replace=False)] = np.arange(k)

    chain_edges: List[Tuple[int, int]] = []
    last_in_chain: Dict[int, int] = {}
    for position in range(n):
        chain = int(labels[position])
        if chain in last_in_chain:
            chain_edges.append((int(order[last_in_chain[chain]]), int(order[position])))
        last_in_chain[chain] = position

    q = DEFAULT_CROSS_FACTOR / n if cross_prob is None else cross_prob
    different_chain = labels[:, None] != labels[None, :]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    for attempt in range(MAX_WIDTH_RETRIES + 1):
        if attempt == MAX_WIDTH_RETRIES:
            q = 0.0
        cross = upper & different_chain & (rng.random((n, n)) < q)
        edges = set(chain_edges)
        for i, j in zip(*np.nonzero(cross)):
            edges.add((int(order[i]), int(order[j])))
        poset = transitive_closure(Dag(n, frozenset(edges)))
        measured = width(poset)
        if measured == k:
            logger.debug(f"random_poset n={n} k={k} accepted after {attempt + 1} draws (q={q:.4f})")
            return poset
        q /= 2.0

    raise Unsatisfiable(f"could not realise width {k} for n={n}")


def _bernoulli_pairs(n: int, prob: float, rng: np.random.Generator) -> Set[Tuple[int, int]]:
    if prob <= 0.0 or n < 2:
        return set()
    chosen = np.triu(rng.random((n, n)) < prob, k=1)
    return {(int(u), int(v)) for u, v in zip(*np.nonzero(chosen))}


def er_query_graph(poset: Poset, p: float, seed: Optional[int] = None,
                   params: Optional[Dict[str, Any]] = None) -> QueryGraph:
    """Cover edges of the poset united with independent Bernoulli(p) pairs"""
    rng = np.random.default_rng(seed)
    edges = {sorted_pair(u, v) for u, v in poset.hasse_edges()}
    edges |= _bernoulli_pairs(poset.n, p, rng)
    graph_params = dict(params or {'n': poset.n, 'k': width(poset), 'p': p})
    return QueryGraph(poset.n, edges, poset, model='er', params=graph_params, seed=seed)


def bipartite_instance(nA: int, nB: int, density: float, seed: Optional[int] = None) -> QueryGraph:
    """
    Complete bipartite query graph between A = [0, nA) and B = [nA, nA + nB).

    A density fraction of the cross pairs is oriented along a random global
    order; the ground truth is the closure of those orientations.
    """
    rng = np.random.default_rng(seed)
    n = nA + nB
    rank = rng.permutation(n)
    chosen = rng.random((nA, nB)) < density
    oriented = []
    for a, j in zip(*np.nonzero(chosen)):
        a, b = int(a), nA + int(j)
        oriented.append((a, b) if rank[a] < rank[b] else (b, a))
    truth = transitive_closure(Dag(n, frozenset(oriented)))
    edges = [(a, b) for a in range(nA) for b in range(nA, n)]
    params = {'nA': nA, 'nB': nB, 'n': n, 'density': density, 'k': width(truth)}
    return QueryGraph(n, edges, truth, model='bipartite', params=params, seed=seed)


def bipartite_from_complete(poset: Poset) -> QueryGraph:
    """
    Doubling reduction from a complete-graph instance to a bipartite one.

    Element v becomes v_L = v and v_R = n + v with v_L < v_R; every u < v adds
    u_L < v_R and u_R < v_L. Sorting the doubled instance recovers the
    original through map_back.
    """
    n = poset.n
    edges = {(v, n + v) for v in range(n)}
    for u, v in zip(*np.nonzero(poset.less)):
        u, v = int(u), int(v)
        edges.add((u, n + v))
        edges.add((n + u, v))
    truth = transitive_closure(Dag(2 * n, frozenset(edges)))
    query_edges = [(a, b) for a in range(n) for b in range(n, 2 * n)]
    params = {'nA': n, 'nB': n, 'n': 2 * n, 'reduced_from': n}
    return QueryGraph(2 * n, query_edges, truth, model='bipartite', params=params)


def map_back(doubled: Poset, n: int) -> Poset:
    """Original poset from a solved doubled instance: u < v iff u_R < v_L"""
    return Poset(doubled.less[n:2 * n, 0:n], validate=False)


def gpsc_instance(n: int, k: int, extra_edge_prob: float = 0.0, seed: Optional[int] = None) -> QueryGraph:
    """Cover edges plus a random share of the remaining comparable pairs; every edge is comparable"""
    poset = random_poset(n, k, derive_seed(seed or 0, 0))
    rng = np.random.default_rng(derive_seed(seed or 0, 1))
    edges = {sorted_pair(u, v) for u, v in poset.hasse_edges()}
    if extra_edge_prob > 0.0:
        comparable = np.triu(poset.less | poset.less.T, k=1)
        chosen = comparable & (rng.random((n, n)) < extra_edge_prob)
        edges |= {(int(u), int(v)) for u, v in zip(*np.nonzero(chosen))}
    params = {'n': n, 'k': k, 'extra_edge_prob': extra_edge_prob}
    return QueryGraph(n, edges, poset, model='gpsc', params=params, seed=seed)


def weight_values(n: int, W: int, gap_profile: str = 'uniform-log') -> List[float]:
    """The W distinct edge weights, ascending and starting at 1"""
    if gap_profile == 'separated':
        ratio = float(math.ceil(n ** 0.75))
    elif gap_profile == 'uniform-log':
        ratio = UNIFORM_LOG_RATIO
    else:
        raise ValueError(f"unknown gap profile: {gap_profile}")
    return [ratio ** i for i in range(W)]


def weighted_instance(n: int, W: int, seed: Optional[int] = None, gap_profile: str = 'uniform-log',
                      extra_edge_prob: float = 0.1) -> QueryGraph:
    """
    Random total order with a weighted query graph.

    Consecutive pairs of the order are always edges; extra pairs join with
    probability extra_edge_prob. Each edge takes one of the W weight values
    uniformly at random.
    """
    if n < 2:
        raise Unsatisfiable("weighted instances need at least two elements")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    truth = Poset.total_order(order)
    edges = {sorted_pair(int(a), int(b)) for a, b in zip(order, order[1:])}
    edges |= _bernoulli_pairs(n, extra_edge_prob, rng)

    values = weight_values(n, W, gap_profile)
    ordered_edges = sorted(edges)
    picks = rng.integers(0, W, size=len(ordered_edges))
    weights = {edge: values[int(i)] for edge, i in zip(ordered_edges, picks)}
    params = {'n': n, 'W': W, 'gap_profile': gap_profile, 'extra_edge_prob': extra_edge_prob}
    return QueryGraph(n, ordered_edges, truth, weights=weights, model='weighted', params=params, seed=seed)


def audit_identifiable(graph: QueryGraph) -> bool:
    """True when the oriented query edges close exactly to the ground truth"""
    return graph.determines_truth()


def generate(params: GenParams) -> QueryGraph:
    """Validate parameters and build the instance they describe"""
    params.validate()
    seed = params.seed

    if params.model == 'er':
        poset = random_poset(params.n, params.k, derive_seed(seed, 0))
        graph = er_query_graph(poset, params.p, derive_seed(seed, 1),
                               params={'n': params.n, 'k': params.k, 'p': params.p})
        graph.seed = seed
    elif params.model == 'bipartite':
        graph = bipartite_instance(params.nA, params.nB, params.density, seed)
    elif params.model == 'gpsc':
        graph = gpsc_instance(params.n, params.k, params.extra_edge_prob or 0.0, seed)
    else:
        graph = weighted_instance(params.n, params.W, seed, params.gap_profile,
                                  0.1 if params.extra_edge_prob is None else params.extra_edge_prob)

    logger.info(f"Generated {params.model} instance: n={graph.n}, edges={graph.num_edges}, seed={seed}")
    return graph
