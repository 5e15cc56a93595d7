"""
Weighted Sorting - Total orders behind a weighted query graph
Chooses a weight threshold from an optimum estimate, sorts the cheap edges with
the GPSC solver, then merges the resulting chains by raising per-vertex weight
levels. A doubling wrapper grows the estimate until a run fits its budget.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from gpsc import build_predictor, gpsc_sort
from oracle import QueryGraph, SessionView
from poset_core import ChainDecomposition, LinearExtension, Relation, chain_decomposition, linear_extension, width
from utils import BudgetExceeded, InconsistentExtension, InvalidParams, NoFeasibleThreshold

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_CONSTANT = 8.0
DEFAULT_POLYLOG_EXPONENT = 3
DEFAULT_WEIGHT_BASE = 2
WEIGHT_TOLERANCE = 1e-12


@dataclass
class Failure:
    """A run that could not finish inside its budget"""
    reason: str
    cost: float = 0.0


@dataclass
class WeightLevels:
    """Per-vertex weight levels and known in-sets while merging chains"""
    chains: Tuple[Tuple[int, ...], ...]
    base: int = DEFAULT_WEIGHT_BASE
    level: Dict[int, int] = field(default_factory=dict)
    top_weight: float = 0.0
    incoming: Dict[int, Set[int]] = field(default_factory=dict)
    pending: Dict[int, int] = field(default_factory=dict)
    waiting_on: Dict[int, Set[int]] = field(default_factory=dict)
    done: Set[int] = field(default_factory=set)
    chain_of: Dict[int, int] = field(default_factory=dict)
    trace: List[Dict[str, Any]] = field(default_factory=list)

    def threshold(self, u: int) -> float:
        return float(self.base) ** self.level[u]

    def at_top(self, u: int) -> bool:
        return self.threshold(u) >= self.top_weight - WEIGHT_TOLERANCE

    def learn_below(self, lower: int, upper: int) -> None:
        """Record lower < upper as a known in-relation of upper"""
        if lower in self.incoming[upper]:
            return
        self.incoming[upper].add(lower)
        self.waiting_on.setdefault(lower, set()).add(upper)
        if lower not in self.done:
            self.pending[upper] += 1

    def finalize(self, v: int) -> None:
        self.done.add(v)
        for u in self.waiting_on.get(v, ()):
            self.pending[u] -= 1

    def candidates(self) -> List[int]:
        return sorted(u for u, count in self.pending.items() if count == 0 and u not in self.done)


def _relation(session: SessionView, u: int, v: int) -> Relation:
    rel = session.known(u, v)
    return rel if rel is not None else session.query(u, v)


def init_levels(session: SessionView, chains: ChainDecomposition, base: int = DEFAULT_WEIGHT_BASE) -> WeightLevels:
    """
    Starting state for the chain merge.

    Every vertex starts one level below the smallest positive weight; each
    chain predecessor is a known in-vertex; zero-weight edges are resolved up
    front.
    """
    weights = [w for w in session.graph.distinct_weights()]
    positive = [w for w in weights if w > 0]
    state = WeightLevels(chains=tuple(tuple(c) for c in chains.chains), base=base)
    state.top_weight = max(weights) if weights else 0.0
    start = int(math.ceil(math.log(min(positive), base))) - 1 if positive else -1

    for idx, chain in enumerate(state.chains):
        for v in chain:
            state.chain_of[v] = idx
            state.level[v] = start
            state.incoming[v] = set()
            state.pending[v] = 0
    for chain in state.chains:
        for a, b in zip(chain, chain[1:]):
            state.learn_below(a, b)

    for u, v in session.edges():
        if session.weight(u, v) <= 0:
            rel = _relation(session, u, v)
            if rel is Relation.LESS:
                state.learn_below(u, v)
            elif rel is Relation.GREATER:
                state.learn_below(v, u)
    return state


def probe(session: SessionView, state: WeightLevels, u: int) -> WeightLevels:
    """
    Raise u one weight level and resolve its edges up to the new threshold.

    For every other chain, a binary search over the chain positions joined to
    u by an edge of weight at most the threshold finds the last vertex below
    u; that vertex and everything before it on the chain become known
    in-vertices of u, and the first vertex above u learns u.
    """
    state.level[u] += 1
    limit = state.threshold(u) + WEIGHT_TOLERANCE
    before = session.report()['cost']
    own = state.chain_of[u]

    for idx, chain in enumerate(state.chains):
        if idx == own:
            continue
        positions = [i for i, c in enumerate(chain) if session.has_edge(c, u) and session.weight(c, u) <= limit]
        if not positions:
            continue
        lo, hi = 0, len(positions)
        while lo < hi:
            mid = (lo + hi) // 2
            rel = _relation(session, chain[positions[mid]], u)
            if rel is Relation.LESS:
                lo = mid + 1
            elif rel is Relation.GREATER:
                hi = mid
            else:
                raise InconsistentExtension(f"{chain[positions[mid]]} and {u} are incomparable in a total order")
        if lo > 0:
            for c in chain[:positions[lo - 1] + 1]:
                state.learn_below(c, u)
        if lo < len(positions):
            state.learn_below(u, chain[positions[lo]])

    state.trace.append({'vertex': u, 'level': state.level[u], 'cost': session.report()['cost'] - before,
                        'finalized': len(state.done)})
    return state


def sort_chains(session: SessionView, chains: ChainDecomposition, base: int = DEFAULT_WEIGHT_BASE,
                stats: Optional[Dict[str, Any]] = None) -> LinearExtension:
    """
    Merge sorted chains of a total order into the full order.

    Each round, the candidates are the unfinished vertices whose known
    in-vertices are all finished; the candidate with the lowest level (then
    lowest id) is probed until one candidate is left.
    """
    state = init_levels(session, chains, base)
    order: List[int] = []
    total = sum(len(c) for c in state.chains)

    while len(order) < total:
        while True:
            candidates = state.candidates()
            if not candidates:
                raise InconsistentExtension(f"no candidate for position {len(order) + 1}")
            if len(candidates) == 1:
                break
            lowest = min(candidates, key=lambda v: (state.level[v], v))
            if state.at_top(lowest):
                raise InconsistentExtension(f"{len(candidates)} candidates remain with every edge resolved")
            probe(session, state, lowest)
        chosen = candidates[0]
        order.append(chosen)
        state.finalize(chosen)
        logger.debug(f"sort_chains: position {len(order)} is {chosen}")

    if stats is not None:
        stats['probes'] = len(state.trace)
        stats['chains'] = len(state.chains)
        stats['probe_trace'] = state.trace
    return LinearExtension(tuple(order))


def find_threshold(weights: Sequence[float], opt_est: float, n: int) -> int:
    """
    1-based index tau of the largest weight allowed in the cheap subgraph.

    Returns the top index when even the heaviest weight is small against the
    estimate; otherwise scans down from below the first large weight for a
    gap of at least n^(1/(2W)) between consecutive weights.
    """
    count = len(weights)
    if count == 0:
        raise NoFeasibleThreshold("no weights to choose from")
    if count == 1:
        return 1
    exponent = 1.0 / (2 * count)
    bound = n ** (-exponent - 0.5) * opt_est
    if weights[-1] <= bound:
        return count
    first_large = next(j for j in range(1, count + 1) if weights[j - 1] > bound)
    gap = n ** (-exponent)
    for tau in range(first_large - 1, 0, -1):
        if weights[tau - 1] <= gap * weights[tau]:
            return tau
    raise NoFeasibleThreshold(f"no weight gap below {bound:.4g} for estimate {opt_est:.4g}")


def audit_threshold(tau: int, weights: Sequence[float], opt_est: float, n: int, k_tau: int) -> bool:
    """Check the gap, absolute-weight and width conditions a threshold must meet"""
    count = len(weights)
    if count == 1:
        return tau == 1
    exponent = 1.0 / (2 * count)
    bound = n ** (-exponent - 0.5) * opt_est
    if tau == count:
        return weights[-1] <= bound
    ratio_ok = weights[tau - 1] <= n ** (-exponent) * weights[tau]
    weight_ok = weights[tau - 1] <= bound
    width_ok = k_tau <= n ** (1.0 - exponent)
    return ratio_ok and weight_ok and width_ok


def true_k_tau(graph: QueryGraph, max_weight: float) -> int:
    """Width of the poset revealed by edges up to max_weight (ground truth)"""
    return width(graph.weight_restricted_truth(max_weight))


def optimal_cost(graph: QueryGraph) -> float:
    """Cost of verifying the true order: the weights along consecutive pairs"""
    order = linear_extension(graph.truth).order
    return float(sum(graph.weight(a, b) for a, b in zip(order, order[1:])))


def budget_for(n: int, distinct: int, opt_est: float, budget_constant: float = DEFAULT_BUDGET_CONSTANT,
               polylog_exponent: int = DEFAULT_POLYLOG_EXPONENT) -> float:
    """C * n^(1 - 1/(2W)) * ln(n)^p * estimate"""
    return budget_constant * n ** (1.0 - 1.0 / (2 * max(distinct, 1))) * math.log(n) ** polylog_exponent * opt_est


def sort_weighted(session: SessionView, opt_est: float, rng: np.random.Generator, budget: Optional[float] = None,
                  budget_constant: float = DEFAULT_BUDGET_CONSTANT, polylog_exponent: int = DEFAULT_POLYLOG_EXPONENT,
                  weight_base: int = DEFAULT_WEIGHT_BASE, stats: Optional[Dict[str, Any]] = None,
                  memo: Optional[Dict[Tuple[str, float], Any]] = None,
                  **gpsc_options) -> Union[LinearExtension, Failure]:
    """
    One budgeted attempt with an optimum estimate.

    Picks the threshold, recovers the poset of edges at or under it with the
    GPSC solver, decomposes it into chains and merges them. Running out of
    budget, or finding no threshold, yields a Failure. A memo shared between
    attempts keeps the predictor and the recovered poset of each threshold
    weight, so a later attempt at the same threshold starts from them.
    """
    n = len(session.vertices)
    if n < 2:
        raise InvalidParams("weighted sorting needs at least two elements")
    weights = list(session.graph.distinct_weights())
    if budget is None:
        budget = budget_for(n, len(weights), opt_est, budget_constant, polylog_exponent)
    if budget <= 0:
        return Failure('budget exhausted', 0.0)
    memo = {} if memo is None else memo

    view = session.budgeted(budget)
    try:
        tau = find_threshold(weights, opt_est, n)
        w_tau = weights[tau - 1]
        p_tau = memo.get(('poset', w_tau))
        if p_tau is None:
            cheap = view.weight_filtered(w_tau)
            predictor = memo.get(('predictor', w_tau))
            if predictor is None:
                predictor = build_predictor(cheap, rng, **gpsc_options)
                memo[('predictor', w_tau)] = predictor
            p_tau = gpsc_sort(cheap, rng, predictor=predictor)
            memo[('poset', w_tau)] = p_tau
        chains = chain_decomposition(p_tau)
        merge_stats: Dict[str, Any] = {}
        result = sort_chains(view, chains, weight_base, merge_stats)
    except BudgetExceeded as exc:
        logger.debug(f"sort_weighted: estimate {opt_est:.4g} ran out of budget {budget:.4g} ({exc})")
        return Failure('budget exhausted', view.spent)
    except NoFeasibleThreshold as exc:
        logger.debug(f"sort_weighted: estimate {opt_est:.4g} has no threshold ({exc})")
        return Failure('no feasible threshold', view.spent)

    if stats is not None:
        stats['tau'] = tau
        stats['w_tau'] = w_tau
        stats['k_tau'] = chains.k
        stats['probes'] = merge_stats.get('probes', 0)
        stats['budget'] = budget
        stats['spent'] = view.spent
    logger.debug(f"sort_weighted: estimate {opt_est:.4g} succeeded, tau={tau}, k_tau={chains.k}, spent {view.spent:.4g}")
    return result


def sort_weighted_doubling(session: SessionView, rng: np.random.Generator, stats: Optional[Dict[str, Any]] = None,
                           memo: Optional[Dict[Tuple[str, float], Any]] = None, **options) -> LinearExtension:
    """
    Start from the smallest positive weight and double the estimate until a run succeeds.

    Rounds share one memo, so a predictor or poset finished under an earlier
    estimate is not rebuilt.
    """
    positive = [w for w in session.graph.distinct_weights() if w > 0]
    if not positive:
        raise InvalidParams("doubling needs at least one positive edge weight")
    memo = {} if memo is None else memo
    opt_est = positive[0]
    rounds = 0
    while True:
        rounds += 1
        round_stats: Dict[str, Any] = {}
        result = sort_weighted(session, opt_est, rng, stats=round_stats, memo=memo, **options)
        if isinstance(result, LinearExtension):
            if stats is not None:
                stats.update(round_stats)
                stats['rounds'] = rounds
                stats['opt_est'] = opt_est
            logger.info(f"Weighted sort finished after {rounds} rounds, estimate {opt_est:.4g}, "
                        f"cost {session.report()['cost']:.4g}")
            return result
        logger.debug(f"Round {rounds} failed ({result.reason}), doubling estimate {opt_est:.4g}")
        opt_est *= 2
