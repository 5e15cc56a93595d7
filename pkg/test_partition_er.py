import json
import math

import numpy as np
import pytest

from framework import gps_solve, partition_result_from_poset
from instance_gen import er_query_graph, random_poset
from oracle import OracleSession
from partition_er import (levels_match, make_er_partition, partition_er, skip_bfs, skip_bfs_state, skip_threshold,
                          true_levels, width_doubling, write_trace)
from poset_core import Poset, width


@pytest.fixture(params=[0.05, 0.2, 1.0], ids=['sparse', 'medium', 'complete'])
def er_instance(request):
    poset = random_poset(60, 3, seed=21)
    return er_query_graph(poset, request.param, seed=22)


def test_skip_threshold():
    assert skip_threshold(3, 100) == 3 + math.ceil(18.0 * math.log(100))
    assert skip_threshold(1, 100, r_multiplier=0.0) == 1


def test_skip_bfs_finds_down_set(er_instance):
    session = OracleSession(er_instance)
    rng = np.random.default_rng(0)
    for pivot in (0, 17, 42):
        assert skip_bfs(session, pivot, 3, er_instance.n, rng) == er_instance.truth.down_set(pivot)


def test_skip_bfs_on_minimal_pivot():
    poset = Poset.total_order([0, 1, 2, 3])
    graph = er_query_graph(poset, 1.0, seed=0)
    state = skip_bfs_state(OracleSession(graph), 0, 1, 4, np.random.default_rng(0))
    assert state.found() == frozenset()
    assert state.levels == [[0], []]


def test_skip_bfs_skips_with_small_threshold():
    # complete graph over a chain: the top's in-neighbours are all one level
    poset = Poset.total_order(list(range(12)))
    graph = er_query_graph(poset, 1.0, seed=0)
    state = skip_bfs_state(OracleSession(graph), 11, 1, 12, np.random.default_rng(3), r_multiplier=0.0,
                           record_trace=True)
    assert state.found() == frozenset(range(11))
    assert state.skipped > 0
    assert state.explored + state.skipped == 11
    actions = {entry['action'] for entry in state.trace}
    assert actions == {'explored', 'skipped'}
    assert all(('hits' in entry) == (entry['action'] == 'explored') for entry in state.trace)


@pytest.mark.parametrize("seed", range(20))
def test_levels_match_ground_truth(seed):
    poset = random_poset(80, 3, seed=seed)
    graph = er_query_graph(poset, 0.1, seed=seed + 1)
    session = OracleSession(graph)
    pivot = int(np.argmax(poset.less.sum(axis=0)))
    state = skip_bfs_state(session, pivot, 3, graph.n, np.random.default_rng(seed), record_trace=True)
    assert levels_match(state, graph)
    assert state.found() == poset.down_set(pivot)


def test_true_levels_on_path():
    poset = Poset.total_order([0, 1, 2, 3])
    graph = er_query_graph(poset, 0.0, seed=0)
    levels = true_levels(graph, 3)
    assert levels[0] == {3}
    assert set().union(*levels) == {0, 1, 2, 3}


def test_true_levels_respects_subset():
    poset = Poset.total_order([0, 1, 2, 3])
    graph = er_query_graph(poset, 0.0, seed=0)
    assert true_levels(graph, 3, subset=[1, 3]) == [{3}]


def test_partition_er_matches_truth(er_instance):
    session = OracleSession(er_instance)
    rng = np.random.default_rng(5)
    stats = {}
    for pivot in range(0, 60, 7):
        result = partition_er(session, pivot, 3, er_instance.n, rng, stats=stats)
        assert result == partition_result_from_poset(er_instance.truth, range(60), pivot)
    assert stats['partition_calls'] == 9
    assert stats['explored'] > 0


def test_partition_er_stays_inside_subset(er_instance):
    session = OracleSession(er_instance)
    subset = list(range(30))
    view = session.induced(subset)
    result = partition_er(view, 5, 3, er_instance.n, np.random.default_rng(1))
    assert result.covers(subset, 5)


@pytest.mark.parametrize("seed", range(10))
def test_gps_solve_er_recovers_poset(seed):
    poset = random_poset(60, 3, seed=seed)
    graph = er_query_graph(poset, 0.2, seed=seed + 50)
    session = OracleSession(graph)
    stats = {}
    recovered = gps_solve(session, make_er_partition(3, graph.n, stats=stats), np.random.default_rng(seed))
    assert recovered == poset
    assert set(stats) == {'partition_calls', 'explored', 'levels_skipped'}
    assert all(session.graph.has_edge(u, v) for u, v in session.answered)


def test_er_queries_are_deterministic():
    graph = er_query_graph(random_poset(50, 3, seed=4), 0.2, seed=5)
    counts = []
    for _ in range(2):
        session = OracleSession(graph)
        gps_solve(session, make_er_partition(3, graph.n), np.random.default_rng(9))
        counts.append(session.query_count)
    assert counts[0] == counts[1]


@pytest.mark.parametrize("k", [1, 2, 5])
def test_width_doubling_without_k(k):
    poset = random_poset(40, k, seed=k)
    graph = er_query_graph(poset, 0.3, seed=k + 1)
    stats = {}
    recovered, k_final = width_doubling(OracleSession(graph), np.random.default_rng(k), stats=stats)
    assert recovered == poset
    assert k_final >= width(recovered)
    assert stats['k_final'] == k_final


def assert_skips_are_earned(state, truth):
    hitters = {}
    for entry in state.trace:
        key = (entry['level'], entry['vertex'])
        if entry['action'] == 'skipped':
            earned = hitters.get(key, [])
            assert entry['counter'] <= 0
            assert len(earned) >= state.r
            assert all(truth.less[entry['vertex'], h] for h in earned)
        else:
            for u in entry['hits']:
                hitters.setdefault((entry['level'], u), []).append(entry['vertex'])


@pytest.mark.parametrize("seed", range(5))
def test_skipped_vertices_were_hit_by_larger_same_level_vertices(seed):
    poset = random_poset(40, 3, seed=seed)
    graph = er_query_graph(poset, 1.0, seed=seed + 7)
    pivot = int(np.argmax(poset.less.sum(axis=0)))
    state = skip_bfs_state(OracleSession(graph), pivot, 1, graph.n, np.random.default_rng(seed),
                           r_multiplier=0.0, record_trace=True)
    assert state.skipped > 0
    assert_skips_are_earned(state, poset)


def test_default_threshold_skips_are_earned():
    poset = random_poset(120, 2, seed=3)
    graph = er_query_graph(poset, 1.0, seed=4)
    pivot = int(np.argmax(poset.less.sum(axis=0)))
    state = skip_bfs_state(OracleSession(graph), pivot, 2, graph.n, np.random.default_rng(3), record_trace=True)
    assert state.found() == poset.down_set(pivot)
    assert_skips_are_earned(state, poset)


def test_write_trace_emits_json_lines(tmp_path):
    poset = Poset.total_order(list(range(8)))
    graph = er_query_graph(poset, 1.0, seed=0)
    state = skip_bfs_state(OracleSession(graph), 7, 1, 8, np.random.default_rng(0), r_multiplier=0.0,
                           record_trace=True)
    path = write_trace(state, tmp_path / 'traces' / 'pivot7.jsonl')
    entries = [json.loads(line) for line in path.read_text().splitlines()]
    assert entries == state.trace
    assert {'level', 'vertex', 'action', 'counter'} <= set(entries[0])
    with pytest.raises(ValueError):
        write_trace(skip_bfs_state(OracleSession(graph), 7, 1, 8, np.random.default_rng(0)), tmp_path / 'x.jsonl')


@pytest.mark.parametrize("p", [0.05, 0.2, 1.0])
def test_er_sort_queries_within_width_bound(p):
    n, k = 100, 3
    graph = er_query_graph(random_poset(n, k, seed=31), p, seed=32)
    session = OracleSession(graph)
    recovered = gps_solve(session, make_er_partition(k, n), np.random.default_rng(33))
    log_n = math.log(n)
    assert recovered == graph.truth
    assert session.query_count <= n * k * (k + log_n) * log_n ** 2
