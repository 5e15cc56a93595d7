import math

import numpy as np
import pytest

import weighted
from instance_gen import weighted_instance
from oracle import OracleSession, QueryGraph
from poset_core import (ChainDecomposition, LinearExtension, Poset, chain_decomposition, is_linear_extension,
                        linear_extension)
from utils import InvalidParams, NoFeasibleThreshold
from weighted import (Failure, audit_threshold, budget_for, find_threshold, init_levels, optimal_cost, probe,
                      sort_chains, sort_weighted, sort_weighted_doubling, true_k_tau)


def ratio_bound(n, W, constant=8.0):
    return constant * n ** (1.0 - 1.0 / (2 * W)) * math.log(n) ** 3


@pytest.fixture
def two_chain_graph():
    # truth 0 < 1 < 2 < 3; cheap edges give chains (0, 2) and (1, 3), heavy edges join them
    truth = Poset.total_order([0, 1, 2, 3])
    weights = {(0, 2): 1.0, (1, 3): 1.0, (0, 1): 8.0, (1, 2): 8.0, (2, 3): 8.0}
    return QueryGraph(4, list(weights), truth, weights=weights, model='weighted', params={'n': 4, 'W': 2})


def test_find_threshold_single_weight():
    assert find_threshold([1.0], 1.0, 100) == 1


@pytest.mark.parametrize("weights, opt_est, expected", [
    ([1.0, 100.0], 1000.0, 2),
    ([1.0, 100.0], 100.0, 1),
])
def test_find_threshold(weights, opt_est, expected):
    assert find_threshold(weights, opt_est, 16) == expected


@pytest.mark.parametrize("weights, opt_est", [([1.0, 1.5], 10.0), ([1.0, 1.5], 5.0)])
def test_find_threshold_infeasible(weights, opt_est):
    with pytest.raises(NoFeasibleThreshold):
        find_threshold(weights, opt_est, 16)


def test_find_threshold_empty():
    with pytest.raises(NoFeasibleThreshold):
        find_threshold([], 1.0, 4)


def test_audit_threshold():
    assert audit_threshold(1, [1.0, 100.0], 100.0, 16, k_tau=2)
    assert not audit_threshold(1, [1.0, 100.0], 100.0, 16, k_tau=16)
    assert audit_threshold(2, [1.0, 100.0], 1000.0, 16, k_tau=1)
    assert audit_threshold(1, [3.0], 1.0, 16, k_tau=5)


def test_budget_for():
    assert budget_for(100, 1, 2.0, budget_constant=1.0, polylog_exponent=0) == pytest.approx(2.0 * 100 ** 0.5)


def test_optimal_cost(two_chain_graph):
    assert optimal_cost(two_chain_graph) == 24.0


def test_true_k_tau(two_chain_graph):
    assert true_k_tau(two_chain_graph, 1.0) == 2
    assert true_k_tau(two_chain_graph, 8.0) == 1


def test_init_levels(two_chain_graph):
    session = OracleSession(two_chain_graph)
    state = init_levels(session, ChainDecomposition(((0, 2), (1, 3))))
    assert state.level == {0: -1, 1: -1, 2: -1, 3: -1}
    assert state.incoming[2] == {0}
    assert state.candidates() == [0, 1]
    assert session.query_count == 0


def test_zero_weight_edges_resolved_up_front():
    truth = Poset.total_order([1, 0, 2])
    weights = {(0, 1): 0.0, (0, 2): 2.0, (1, 2): 2.0}
    graph = QueryGraph(3, list(weights), truth, weights=weights, model='weighted')
    session = OracleSession(graph)
    state = init_levels(session, ChainDecomposition(((0,), (1,), (2,))))
    assert state.incoming[0] == {1}
    assert session.query_count == 1
    assert session.cost == 0.0


def test_level_step_learns_across_chains(two_chain_graph):
    session = OracleSession(two_chain_graph)
    state = init_levels(session, ChainDecomposition(((0, 2), (1, 3))))
    for _ in range(4):
        probe(session, state, 1)
    assert state.level[1] == 3
    assert 0 in state.incoming[1]
    assert 1 in state.incoming[2]
    assert [entry['level'] for entry in state.trace] == [0, 1, 2, 3]
    assert state.trace[-1]['cost'] > 0


def test_sort_chains_merges_total_order(two_chain_graph):
    session = OracleSession(two_chain_graph)
    stats = {}
    order = sort_chains(session, ChainDecomposition(((0, 2), (1, 3))), stats=stats)
    assert order == LinearExtension((0, 1, 2, 3))
    assert stats['chains'] == 2
    assert stats['probes'] == len(stats['probe_trace'])


@pytest.mark.parametrize("seed", range(5))
def test_sort_chains_on_random_instance(seed):
    graph = weighted_instance(40, 3, seed=seed)
    cheap_truth = graph.weight_restricted_truth(graph.distinct_weights()[0])
    order = sort_chains(OracleSession(graph), chain_decomposition(cheap_truth))
    assert is_linear_extension(order, graph.truth)


def test_sort_weighted_needs_two_elements():
    graph = QueryGraph(1, [], Poset.antichain(1), weights={}, model='weighted')
    with pytest.raises(InvalidParams):
        sort_weighted(OracleSession(graph), 1.0, np.random.default_rng(0))


def test_sort_weighted_fails_on_tiny_budget():
    graph = weighted_instance(30, 2, seed=1)
    result = sort_weighted(OracleSession(graph), 1e6, np.random.default_rng(0), budget=2.0)
    assert isinstance(result, Failure)
    assert result.reason == 'budget exhausted'
    assert result.cost <= 2.0


def test_sort_weighted_small_estimate_has_no_threshold():
    graph = weighted_instance(30, 2, seed=1)
    session = OracleSession(graph)
    result = sort_weighted(session, 1.0, np.random.default_rng(0))
    assert result == Failure('no feasible threshold', 0.0)
    assert session.query_count == 0


def test_sort_weighted_succeeds_with_generous_estimate():
    graph = weighted_instance(30, 2, seed=1)
    session = OracleSession(graph)
    stats = {}
    result = sort_weighted(session, 1e6, np.random.default_rng(0), stats=stats)
    assert isinstance(result, LinearExtension)
    assert is_linear_extension(result, graph.truth)
    assert stats['spent'] <= stats['budget']
    assert stats['tau'] in (1, 2)


def test_sort_weighted_doubling_needs_positive_weight():
    truth = Poset.total_order([0, 1])
    graph = QueryGraph(2, [(0, 1)], truth, weights={(0, 1): 0.0}, model='weighted')
    with pytest.raises(InvalidParams):
        sort_weighted_doubling(OracleSession(graph), np.random.default_rng(0))


@pytest.mark.parametrize("n, W", [(64, 1), (64, 2), (64, 3), (128, 2)])
def test_doubling_sorts_within_ratio_bound(n, W):
    graph = weighted_instance(n, W, seed=n + W)
    session = OracleSession(graph)
    stats = {}
    order = sort_weighted_doubling(session, np.random.default_rng(W), stats=stats)
    assert is_linear_extension(order, graph.truth)
    assert session.cost / optimal_cost(graph) <= ratio_bound(n, W)
    assert stats['rounds'] >= 1
    assert stats['opt_est'] >= min(w for w in graph.distinct_weights() if w > 0)


def test_doubling_on_separated_profile():
    n = 64
    graph = weighted_instance(n, 2, seed=3, gap_profile='separated')
    session = OracleSession(graph)
    order = sort_weighted_doubling(session, np.random.default_rng(3))
    assert is_linear_extension(order, graph.truth)
    assert session.cost / optimal_cost(graph) <= 8.0 * n ** 0.75 * math.log(n) ** 3


def cheap_path_graph(n, seed):
    # consecutive pairs of the order cost 1, every other edge costs 4 or 16
    base = weighted_instance(n, 3, seed=seed)
    order = linear_extension(base.truth).order
    path = {tuple(sorted(pair)) for pair in zip(order, order[1:])}
    weights = {edge: 1.0 if edge in path else (4.0 if i % 2 == 0 else 16.0) for i, edge in enumerate(base.edges)}
    return QueryGraph(n, base.edges, base.truth, weights=weights, model='weighted', params={'n': n, 'W': 3})


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("factor", [2.0, 3.0, 8.0])
def test_threshold_audit_holds_when_estimate_doubles_optimum(seed, factor):
    graph = cheap_path_graph(64, seed)
    weights = list(graph.distinct_weights())
    assert weights == [1.0, 4.0, 16.0]
    opt_est = factor * optimal_cost(graph)
    tau = find_threshold(weights, opt_est, graph.n)
    assert tau == (3 if factor == 8.0 else 2)
    assert audit_threshold(tau, weights, opt_est, graph.n, true_k_tau(graph, weights[tau - 1]))


@pytest.mark.parametrize("factor", [2.0, 8.0, 64.0])
def test_threshold_audit_on_random_weights(factor):
    n = 64
    graph = weighted_instance(n, 3, seed=11)
    weights = list(graph.distinct_weights())
    opt_est = factor * optimal_cost(graph)
    tau = find_threshold(weights, opt_est, n)
    assert audit_threshold(tau, weights, opt_est, n, true_k_tau(graph, weights[tau - 1]))


@pytest.mark.parametrize("seed", range(3))
def test_level_step_cost_within_level_bound(seed):
    n = 48
    graph = weighted_instance(n, 3, seed=seed)
    cheap_truth = graph.weight_restricted_truth(graph.distinct_weights()[0])
    chains = chain_decomposition(cheap_truth)
    stats = {}
    sort_chains(OracleSession(graph), chains, stats=stats)
    per_chain = math.ceil(math.log2(n)) + 1
    for entry in stats['probe_trace']:
        assert entry['cost'] <= 2.0 ** entry['level'] * chains.k * per_chain + 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_each_weight_level_charged_once_and_finalized_vertices_skipped(seed):
    graph = weighted_instance(48, 2, seed=seed)
    cheap_truth = graph.weight_restricted_truth(graph.distinct_weights()[0])
    stats = {}
    order = sort_chains(OracleSession(graph), chain_decomposition(cheap_truth), stats=stats)
    seen = set()
    last_level = {}
    for entry in stats['probe_trace']:
        u, level = entry['vertex'], entry['level']
        assert (u, level) not in seen
        seen.add((u, level))
        assert level == last_level.get(u, level - 1) + 1
        last_level[u] = level
        assert u not in order.order[:entry['finalized']]


def test_repeat_attempt_reuses_memoized_predictor(monkeypatch):
    graph = weighted_instance(40, 2, seed=5)
    session = OracleSession(graph)
    built = []
    real_build = weighted.build_predictor

    def counting_build(view, rng, **options):
        built.append(len(view.vertices))
        return real_build(view, rng, **options)

    monkeypatch.setattr(weighted, 'build_predictor', counting_build)
    memo = {}
    first = sort_weighted(session, 1e6, np.random.default_rng(0), memo=memo)
    spent = session.query_count
    second = sort_weighted(session, 1e6, np.random.default_rng(1), memo=memo)
    assert first == second
    assert len(built) == 1
    assert session.query_count == spent
    assert {kind for kind, _ in memo} == {'predictor', 'poset'}


def test_doubling_never_rebuilds_a_finished_predictor(monkeypatch):
    graph = weighted_instance(64, 3, seed=8)
    session = OracleSession(graph)
    memo, stats, built = {}, {}, []
    real_build = weighted.build_predictor

    def checked_build(view, rng, **options):
        assert ('predictor', view.max_weight) not in memo
        built.append(view.max_weight)
        return real_build(view, rng, **options)

    monkeypatch.setattr(weighted, 'build_predictor', checked_build)
    order = sort_weighted_doubling(session, np.random.default_rng(8), stats=stats, memo=memo)
    assert is_linear_extension(order, graph.truth)
    assert len(built) <= stats['rounds']
    assert ('predictor', stats['w_tau']) in memo
