import json
from math import comb

import pandas as pd
import pytest
from click.testing import CliRunner

import bench_cli
from bench_cli import RunReport, check_compatible, cli, run_trial, run_trials
from config_manager import ConfigManager
from instance_gen import bipartite_instance, er_query_graph, gpsc_instance, random_poset, weighted_instance
from oracle import QueryGraph
from poset_core import Poset
from utils import ModelMismatch


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tuning(tmp_path):
    return ConfigManager(str(tmp_path / 'missing_tuning.json'))


def invoke(runner, *args):
    return runner.invoke(cli, ['--log-level', 'ERROR', *args])


def gen_er(runner, path, n=12, seed=1, p='1.0'):
    result = invoke(runner, 'gen', '--model', 'er', '--n', str(n), '--k', '3', '--p', p,
                    '--seed', str(seed), '--out', str(path))
    assert result.exit_code == 0, result.output
    return path


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_check_compatible():
    complete = er_query_graph(random_poset(6, 2, seed=0), 1.0, seed=0)
    check_compatible(complete, 'naive')
    check_compatible(complete, 'er')
    with pytest.raises(ModelMismatch):
        check_compatible(complete, 'bipartite')
    with pytest.raises(ModelMismatch):
        check_compatible(bipartite_instance(3, 3, 0.5, seed=0), 'naive')
    with pytest.raises(ModelMismatch):
        check_compatible(QueryGraph(2, [(0, 1)], Poset.total_order([0, 1]), model='er', params={'n': 2}), 'er')
    check_compatible(QueryGraph(2, [(0, 1)], Poset.total_order([0, 1]), model='er', params={'n': 2}), 'er-doubling')


def test_run_trial_weighted_report(tuning):
    graph = weighted_instance(24, 2, seed=4)
    report = run_trial(graph, 'weighted', master_seed=3, trial=0, tuning=tuning)
    assert report.correct
    assert report.W == 2
    assert report.opt > 0
    assert report.ratio == pytest.approx(report.cost / report.opt)
    assert 'probe_trace' not in report.stats
    assert report.stats['rounds'] >= 1


def test_run_trial_er_report(tuning):
    graph = er_query_graph(random_poset(30, 3, seed=2), 0.2, seed=3)
    report = run_trial(graph, 'er', master_seed=0, trial=5, tuning=tuning)
    assert report.correct
    assert (report.k, report.p, report.trial) == (3, 0.2, 5)
    assert report.opt is None and report.ratio is None
    assert report.query_count > 0
    assert set(report.to_dict()) >= {'model', 'algorithm', 'query_count', 'stats'}


def test_run_trials_do_not_depend_on_workers(tuning):
    graph = er_query_graph(random_poset(30, 3, seed=5), 0.2, seed=6)
    serial = run_trials(graph, 'er-doubling', 4, 11, tuning, max_workers=1)
    threaded = run_trials(graph, 'er-doubling', 4, 11, tuning, max_workers=3)
    assert [r.trial for r in threaded] == [0, 1, 2, 3]
    assert [r.query_count for r in serial] == [r.query_count for r in threaded]
    assert all(r.correct for r in threaded)


def test_gen_is_byte_identical(runner, tmp_path):
    first = gen_er(runner, tmp_path / 'a.json', seed=7, p='0.3')
    second = gen_er(runner, tmp_path / 'b.json', seed=7, p='0.3')
    assert first.read_bytes() == second.read_bytes()


def test_gen_default_path(runner, tmp_path, monkeypatch):
    monkeypatch.setattr(bench_cli.config, 'OUTPUT_DIR', str(tmp_path))
    result = invoke(runner, 'gen', '--model', 'weighted', '--n', '16', '--W', '1', '--seed', '2')
    assert result.exit_code == 0, result.output
    path = tmp_path / 'weighted_n16_s2.json'
    assert path.exists()
    graph = QueryGraph.load(path)
    assert graph.distinct_weights() == (1.0,)


def test_gen_rejects_invalid_params(runner, tmp_path):
    result = invoke(runner, 'gen', '--model', 'er', '--n', '10', '--k', '20', '--p', '0.5',
                    '--out', str(tmp_path / 'bad.json'))
    assert result.exit_code == 2
    assert not (tmp_path / 'bad.json').exists()


def test_verify(runner, tmp_path):
    good = gen_er(runner, tmp_path / 'good.json', p='0.2')
    assert invoke(runner, 'verify', str(good)).exit_code == 0

    bad = tmp_path / 'bad.json'
    QueryGraph(3, [(0, 1)], Poset.total_order([0, 1, 2]), model='er', params={'n': 3}).save(bad)
    assert invoke(runner, 'verify', str(bad)).exit_code == 1


def test_run_naive_on_complete_graph(runner, tmp_path):
    instance = gen_er(runner, tmp_path / 'complete.json', n=12)
    out = tmp_path / 'runs'
    result = invoke(runner, 'run', str(instance), '--algo', 'naive', '--trials', '3', '--out', str(out),
                    '--tuning', str(tmp_path / 'none.json'))
    assert result.exit_code == 0, result.output
    assert '3/3 correct' in result.output

    records = read_jsonl(out / 'runs.jsonl')
    assert [r['trial'] for r in records] == [0, 1, 2]
    assert all(r['correct'] and r['query_count'] <= comb(12, 2) for r in records)
    table = pd.read_csv(out / 'runs.csv')
    assert list(table.columns)[:4] == ['model', 'algorithm', 'n', 'k']
    assert len(table) == 3


def test_run_appends_to_ledger(runner, tmp_path):
    instance = gen_er(runner, tmp_path / 'complete.json', n=8)
    out = tmp_path / 'runs'
    for _ in range(2):
        invoke(runner, 'run', str(instance), '--algo', 'er', '--trials', '2', '--out', str(out),
               '--tuning', str(tmp_path / 'none.json'))
    assert len(read_jsonl(out / 'runs.jsonl')) == 4
    assert len(pd.read_csv(out / 'runs.csv')) == 4


def test_run_rejects_model_mismatch(runner, tmp_path):
    instance = tmp_path / 'bipartite.json'
    result = invoke(runner, 'gen', '--model', 'bipartite', '--nA', '4', '--nB', '4', '--density', '0.5',
                    '--out', str(instance))
    assert result.exit_code == 0, result.output
    result = invoke(runner, 'run', str(instance), '--algo', 'er', '--trials', '1', '--out', str(tmp_path))
    assert result.exit_code == 2


def test_run_rejects_bad_tuning(runner, tmp_path):
    instance = gen_er(runner, tmp_path / 'complete.json', n=6)
    tuning_file = tmp_path / 'tuning.json'
    tuning_file.write_text(json.dumps({'gpsc': {'mode': 'guess'}}))
    result = invoke(runner, 'run', str(instance), '--algo', 'naive', '--tuning', str(tuning_file))
    assert result.exit_code == 2
    assert 'gpsc.mode' in result.output


def test_strict_mode_fails_on_incorrect_trials(runner, tmp_path, monkeypatch):
    instance = gen_er(runner, tmp_path / 'complete.json', n=6)

    def wrong(graph, algorithm, master_seed, trial, tuning):
        return RunReport(model=graph.model, algorithm=algorithm, n=graph.n, k=None, p=None, W=None,
                         instance_seed=graph.seed, master_seed=master_seed, trial=trial, correct=False)

    monkeypatch.setattr(bench_cli, 'run_trial', wrong)
    args = ['run', str(instance), '--algo', 'naive', '--trials', '2', '--out', str(tmp_path / 'runs'),
            '--tuning', str(tmp_path / 'none.json')]
    assert invoke(runner, *args, '--strict').exit_code == 1
    result = invoke(runner, *args, '--no-strict')
    assert result.exit_code == 0
    assert '0/2 correct' in result.output


def test_report_fits_slopes(runner, tmp_path):
    out = tmp_path / 'runs'
    for n in (8, 16, 24):
        instance = gen_er(runner, tmp_path / f'er_{n}.json', n=n)
        result = invoke(runner, 'run', str(instance), '--algo', 'naive', '--trials', '2', '--out', str(out),
                        '--tuning', str(tmp_path / 'none.json'))
        assert result.exit_code == 0, result.output

    report_dir = tmp_path / 'report'
    result = invoke(runner, 'report', str(out / 'runs.jsonl'), '--out', str(report_dir))
    assert result.exit_code == 0, result.output
    assert 'er/naive' in result.output
    slopes = pd.read_csv(report_dir / 'slopes.csv')
    assert len(slopes) == 1
    assert slopes['points'].iloc[0] == 3
    assert 0.8 < slopes['slope'].iloc[0] <= 2.5
    assert (report_dir / 'summary.csv').exists()


def test_report_needs_two_sizes(runner, tmp_path):
    instance = gen_er(runner, tmp_path / 'complete.json', n=8)
    out = tmp_path / 'runs'
    invoke(runner, 'run', str(instance), '--algo', 'naive', '--trials', '2', '--out', str(out),
           '--tuning', str(tmp_path / 'none.json'))
    result = invoke(runner, 'report', str(out / 'runs.jsonl'), '--out', str(tmp_path / 'report'))
    assert result.exit_code == 2


def test_run_trial_gpsc_records_predictor_errors(tuning):
    graph = gpsc_instance(24, 2, 0.3, seed=1)
    report = run_trial(graph, 'gpsc', master_seed=0, trial=0, tuning=tuning)
    assert report.correct
    wrong = report.stats['predictor_wrong_max']
    assert isinstance(wrong, int) and 0 <= wrong < graph.n
    assert 'inserts' not in report.stats
    assert report.stats['predictor_queries'] + report.stats['sort_queries'] == report.query_count


def test_run_trial_weighted_records_predictor_errors(tuning):
    report = run_trial(weighted_instance(24, 2, seed=4), 'weighted', master_seed=3, trial=0, tuning=tuning)
    assert report.correct
    assert report.stats['predictor_wrong_max'] >= 0


def test_run_trial_bipartite_reports_sides(tuning):
    report = run_trial(bipartite_instance(5, 7, 0.5, seed=2), 'bipartite', master_seed=0, trial=0, tuning=tuning)
    assert report.correct
    assert (report.nA, report.nB, report.n) == (5, 7, 12)
    assert 'predictor_wrong_max' not in report.stats


def test_charge_every_call_counts_repeats(runner, tmp_path):
    instance = gen_er(runner, tmp_path / 'complete.json', n=12)
    base = ['run', str(instance), '--algo', 'naive', '--trials', '2']
    counts = {}
    for flag in ('--charge-once', '--charge-every-call'):
        out = tmp_path / flag.strip('-')
        result = invoke(runner, *base, flag, '--out', str(out), '--tuning', str(tmp_path / 'none.json'))
        assert result.exit_code == 0, result.output
        counts[flag] = [r['query_count'] for r in read_jsonl(out / 'runs.jsonl')]
    assert all(q <= comb(12, 2) for q in counts['--charge-once'])
    assert all(every > once for once, every in zip(counts['--charge-once'], counts['--charge-every-call']))

    tuning_file = tmp_path / 'tuning.json'
    tuning_file.write_text(json.dumps({'bench': {'charge_every_call': True}}))
    result = invoke(runner, *base, '--out', str(tmp_path / 'tuned'), '--tuning', str(tuning_file))
    assert result.exit_code == 0, result.output
    assert [r['query_count'] for r in read_jsonl(tmp_path / 'tuned' / 'runs.jsonl')] == counts['--charge-every-call']

    result = invoke(runner, *base, '--charge-once', '--out', str(tmp_path / 'override'), '--tuning', str(tuning_file))
    assert result.exit_code == 0, result.output
    assert [r['query_count'] for r in read_jsonl(tmp_path / 'override' / 'runs.jsonl')] == counts['--charge-once']


@pytest.mark.parametrize("direction", ['down', 'up'])
def test_trace_writes_json_lines(runner, tmp_path, direction):
    instance = gen_er(runner, tmp_path / 'er.json', n=20, seed=3, p='0.3')
    graph = QueryGraph.load(instance)
    pivot = max(range(graph.n), key=lambda v: len(graph.truth.down_set(v)) + len(graph.truth.up_set(v)))
    out = tmp_path / 'trace.jsonl'
    result = invoke(runner, 'trace', str(instance), '--pivot', str(pivot), '--direction', direction,
                    '--out', str(out), '--tuning', str(tmp_path / 'none.json'))
    assert result.exit_code == 0, result.output
    assert 'exact' in result.output

    entries = read_jsonl(out)
    expected = graph.truth.down_set(pivot) if direction == 'down' else graph.truth.up_set(pivot)
    assert {e['vertex'] for e in entries} == set(expected)
    assert all(e['action'] in ('explored', 'skipped') for e in entries)
    assert all(('hits' in e) == (e['action'] == 'explored') for e in entries)
    assert [e['level'] for e in entries] == sorted(e['level'] for e in entries)


def test_trace_rejects_bad_input(runner, tmp_path):
    instance = gen_er(runner, tmp_path / 'er.json', n=8)
    assert invoke(runner, 'trace', str(instance), '--pivot', '8', '--out', str(tmp_path / 't.jsonl')).exit_code == 2
    assert invoke(runner, 'trace', str(instance), '--pivot', '0', '--k', '0',
                  '--out', str(tmp_path / 't.jsonl')).exit_code == 2

    bipartite = tmp_path / 'bipartite.json'
    bipartite_instance(3, 3, 0.5, seed=0).save(bipartite)
    assert invoke(runner, 'trace', str(bipartite), '--pivot', '0', '--out', str(tmp_path / 't.jsonl')).exit_code == 2
    assert not (tmp_path / 't.jsonl').exists()
