"""
Benchmark command line
Generate instances, run the sorting algorithms under a metered oracle and build scaling reports
"""

import functools
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np

from analytics_engine import AnalyticsEngine
from audit_logger import AuditLogger
from config import config, setup_logging
from config_manager import ConfigManager
from framework import gps_solve, naive_partition
from gpsc import Predictor, build_predictor, gpsc_sort
from instance_gen import GenParams, audit_identifiable, generate
from oracle import OracleSession, QueryGraph, SessionView
from partition_bipartite import make_bipartite_partition
from partition_er import levels_match, make_er_partition, skip_bfs_state, width_doubling, write_trace
from poset_core import is_linear_extension
from utils import ErrorHandler, InconsistentExtension, InvalidParams, ModelMismatch, PerformanceMonitor, derive_rng
from weighted import optimal_cost, sort_weighted_doubling

logger = logging.getLogger(__name__)

ALGORITHMS = ('naive', 'er', 'er-doubling', 'bipartite', 'gpsc', 'weighted')
MODELS = ('er', 'bipartite', 'gpsc', 'weighted')
REQUIRED_MODEL = {
    'er': 'er',
    'er-doubling': 'er',
    'bipartite': 'bipartite',
    'gpsc': 'gpsc',
    'weighted': 'weighted',
}


@dataclass
class RunReport:
    """Outcome of one trial of one algorithm on one instance"""
    model: str
    algorithm: str
    n: int
    k: Optional[int]
    p: Optional[float]
    W: Optional[int]
    instance_seed: Optional[int]
    master_seed: int
    trial: int
    nA: Optional[int] = None
    nB: Optional[int] = None
    query_count: int = 0
    cost: float = 0.0
    opt: Optional[float] = None
    ratio: Optional[float] = None
    wall_time: float = 0.0
    correct: bool = False
    error: Optional[str] = None
    stats: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def check_compatible(graph: QueryGraph, algorithm: str) -> None:
    """Raise ModelMismatch when the algorithm's input assumptions do not fit the instance"""
    if algorithm not in ALGORITHMS:
        raise ModelMismatch(f"unknown algorithm {algorithm!r}")
    if algorithm == 'naive':
        if not graph.is_complete():
            raise ModelMismatch("naive partition needs a complete query graph")
        return
    required = REQUIRED_MODEL[algorithm]
    if graph.model != required:
        raise ModelMismatch(f"algorithm {algorithm!r} expects a {required} instance, got {graph.model}")
    if algorithm == 'er' and graph.params.get('k') is None:
        raise ModelMismatch("er algorithm needs the instance width k; use er-doubling instead")


def _plain_stats(stats: Dict[str, Any]) -> Dict[str, Any]:
    plain = {}
    for key, value in stats.items():
        if isinstance(value, (list, tuple, dict)):
            continue
        plain[key] = value.item() if isinstance(value, np.generic) else value
    return plain


def run_trial(graph: QueryGraph, algorithm: str, master_seed: int, trial: int,
              tuning: ConfigManager) -> RunReport:
    """One seeded trial; the instance is shared read-only, everything else is owned by the trial"""
    params = graph.params
    report = RunReport(
        model=graph.model, algorithm=algorithm, n=graph.n,
        k=params.get('k'), p=params.get('p', params.get('density')), W=params.get('W'),
        instance_seed=graph.seed, master_seed=master_seed, trial=trial, nA=params.get('nA'), nB=params.get('nB'),
    )
    rng = derive_rng(master_seed, trial)
    session = OracleSession(graph, charge_every_call=bool(tuning.get('bench', 'charge_every_call')))
    predictor: Optional[Predictor] = None
    stats: Dict[str, Any] = {}
    r_multiplier = tuning.get('skip_bfs', 'r_multiplier')
    elapsed = PerformanceMonitor.stopwatch()

    try:
        if algorithm == 'weighted':
            weighted = tuning.get('weighted')
            memo: Dict[Any, Any] = {}
            order = sort_weighted_doubling(session, rng, stats=stats, memo=memo,
                                           budget_constant=weighted['budget_constant'],
                                           polylog_exponent=weighted['polylog_exponent'],
                                           weight_base=weighted['weight_base'],
                                           **tuning.gpsc_options())
            predictor = memo.get(('predictor', stats.get('w_tau')))
            report.correct = is_linear_extension(order, graph.truth)
        else:
            if algorithm == 'naive':
                recovered = gps_solve(session, naive_partition, rng)
            elif algorithm == 'er':
                recovered = gps_solve(session, make_er_partition(int(params['k']), graph.n, r_multiplier, stats), rng)
            elif algorithm == 'er-doubling':
                recovered, _ = width_doubling(session, rng, graph.n, r_multiplier, stats)
            elif algorithm == 'bipartite':
                recovered = gps_solve(session, make_bipartite_partition(stats), rng)
            else:
                predictor = build_predictor(session, rng, **tuning.gpsc_options())
                recovered = gpsc_sort(session, rng, predictor=predictor, stats=stats)
            report.correct = recovered == graph.truth
    except InconsistentExtension as e:
        report.correct = False
        report.error = str(e)
        logger.warning(f"Trial {trial} of {algorithm} hit an inconsistent extension: {e}")

    if predictor is not None:
        stats['predictor_wrong_max'] = int(predictor.wrong_counts(graph).max())
    report.wall_time = elapsed()
    usage = session.report()
    report.query_count = int(usage['query_count'])
    report.cost = float(usage['cost'])
    if algorithm == 'weighted':
        report.opt = optimal_cost(graph)
        report.ratio = report.cost / report.opt if report.opt > 0 else None
    report.stats = _plain_stats(stats)
    return report


def run_trials(graph: QueryGraph, algorithm: str, trials: int, master_seed: int,
               tuning: ConfigManager, max_workers: int = 1):
    """All trials in trial order; concurrency never changes a trial's outcome"""
    check_compatible(graph, algorithm)
    worker = functools.partial(run_trial, graph, algorithm, master_seed, tuning=tuning)
    if max_workers <= 1 or trials <= 1:
        return [worker(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(worker, range(trials)))


def handled(command):
    """Convert library errors into logged messages and exit codes"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as e:
            sys.exit(ErrorHandler.handle_error(e, command.__name__))
    return wrapper


@click.group()
@click.option('--log-level', default=None, help='Override LOG_LEVEL for this invocation')
def cli(log_level):
    """Generalized poset sorting benchmark"""
    setup_logging(config, level=log_level)


@cli.command()
@click.option('--model', type=click.Choice(MODELS), default='er', show_default=True)
@click.option('--n', 'n', type=int, default=None, help='Number of elements')
@click.option('--k', 'k', type=int, default=None, help='Width of the hidden poset')
@click.option('--p', 'p', type=float, default=None, help='Edge probability (er)')
@click.option('--W', 'W', type=int, default=None, help='Number of distinct weights (weighted)')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--nA', 'nA', type=int, default=None, help='Side A size (bipartite)')
@click.option('--nB', 'nB', type=int, default=None, help='Side B size (bipartite)')
@click.option('--density', type=float, default=None, help='Oriented share of cross pairs (bipartite)')
@click.option('--extra-edge-prob', type=float, default=None, help='Extra edge probability (gpsc, weighted)')
@click.option('--gap-profile', type=click.Choice(['uniform-log', 'separated']), default='uniform-log',
              show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='Instance file (default: <GPS_OUTPUT_DIR>/<model>_n<n>_s<seed>.json)')
@handled
def gen(model, n, k, p, W, seed, nA, nB, density, extra_edge_prob, gap_profile, out):
    """Generate a seeded instance file"""
    params = GenParams(model=model, n=n, k=k, p=p, W=W, seed=seed, nA=nA, nB=nB, density=density,
                       extra_edge_prob=extra_edge_prob, gap_profile=gap_profile)
    graph = generate(params)
    path = Path(out) if out else Path(config.OUTPUT_DIR) / f"{model}_n{graph.n}_s{seed}.json"
    graph.save(path)
    click.echo(str(path))


@cli.command()
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@click.option('--algo', 'algorithm', type=click.Choice(ALGORITHMS), required=True)
@click.option('--trials', type=int, default=None, help='Trials to run (default from tuning file)')
@click.option('--seed', type=int, default=0, show_default=True, help='Master seed')
@click.option('--strict/--no-strict', default=None, help='Exit nonzero when any trial is incorrect')
@click.option('--out', type=click.Path(file_okay=False), default=None,
              help='Directory for runs.jsonl and runs.csv (default: GPS_OUTPUT_DIR)')
@click.option('--charge-every-call/--charge-once', 'charge_every_call', default=None,
              help='Charge repeated queries of an answered pair (default from tuning file)')
@click.option('--tuning', type=click.Path(dir_okay=False), default=None, help='Tuning JSON file')
@handled
def run(instance, algorithm, trials, seed, strict, out, tuning, charge_every_call):
    """Run an algorithm on an instance and append one report per trial"""
    manager = ConfigManager(tuning)
    if charge_every_call is not None:
        manager.set('bench', 'charge_every_call', charge_every_call)
    ok, errors = manager.validate()
    if not ok:
        raise click.BadParameter('; '.join(errors), param_hint='--tuning')
    trials = trials if trials is not None else manager.get('bench', 'trials')
    strict = strict if strict is not None else manager.get('bench', 'strict')
    if trials < 1:
        raise click.BadParameter('must be at least 1', param_hint='--trials')

    graph = QueryGraph.load(instance)
    reports = run_trials(graph, algorithm, trials, seed, manager, config.MAX_WORKERS)

    ledger = AuditLogger()
    for report in reports:
        ledger.log_trial(report.to_dict())
    out_dir = Path(out or config.OUTPUT_DIR)
    ledger.write(out_dir / 'runs.jsonl', out_dir / 'runs.csv')

    incorrect = sum(1 for r in reports if not r.correct)
    queries = [r.query_count for r in reports]
    click.echo(f"{algorithm} on {graph.model} n={graph.n}: {trials - incorrect}/{trials} correct, "
               f"median queries {float(np.median(queries)):g}")
    if strict and incorrect:
        logger.warning(f"Strict mode: {incorrect} of {trials} trials incorrect")
        sys.exit(1)


@cli.command()
@click.argument('reports', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', type=click.Path(file_okay=False), default=None,
              help='Directory for summary.csv and slopes.csv (default: GPS_OUTPUT_DIR)')
@handled
def report(reports, out):
    """Aggregate JSON-lines run reports into scaling tables"""
    engine = AnalyticsEngine.from_jsonl(list(reports))
    summary_path, slopes_path = engine.write_report(out or config.OUTPUT_DIR)
    slopes = engine.slope_fits()
    for row in slopes.itertuples(index=False):
        k = '-' if row.k is None or (isinstance(row.k, float) and math.isnan(row.k)) else row.k
        click.echo(f"{row.model}/{row.algorithm} k={k}: slope {row.slope:.3f} over {row.points} sizes")
    click.echo(str(summary_path))
    click.echo(str(slopes_path))


@cli.command()
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@click.option('--pivot', type=int, required=True)
@click.option('--k', 'k', type=int, default=None, help='Width parameter (default: the instance width)')
@click.option('--direction', type=click.Choice(['down', 'up']), default='down', show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--tuning', type=click.Path(dir_okay=False), default=None, help='Tuning JSON file')
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='Trace file (default: <GPS_OUTPUT_DIR>/trace_p<pivot>_<direction>.jsonl)')
@handled
def trace(instance, pivot, k, direction, seed, tuning, out):
    """Run one Skip-BFS from a pivot and write its per-vertex trace"""
    graph = QueryGraph.load(instance)
    if graph.model != 'er':
        raise ModelMismatch(f"trace runs Skip-BFS on er instances, got {graph.model}")
    k = k if k is not None else graph.params.get('k')
    if k is None or k < 1:
        raise InvalidParams("trace needs a positive width k")
    if not 0 <= pivot < graph.n:
        raise InvalidParams(f"pivot {pivot} outside [0, {graph.n})")

    manager = ConfigManager(tuning)
    ok, errors = manager.validate()
    if not ok:
        raise click.BadParameter('; '.join(errors), param_hint='--tuning')
    session: SessionView = OracleSession(graph)
    if direction == 'up':
        session = session.reversed()
    state = skip_bfs_state(session, pivot, int(k), graph.n, derive_rng(seed, pivot),
                           manager.get('skip_bfs', 'r_multiplier'), record_trace=True)
    expected = graph.truth.down_set(pivot) if direction == 'down' else graph.truth.up_set(pivot)
    exact = state.found() == expected and (direction == 'up' or levels_match(state, graph))
    path = write_trace(state, out or Path(config.OUTPUT_DIR) / f"trace_p{pivot}_{direction}.jsonl")
    click.echo(f"{direction} from {pivot}: {len(state.found())} found, {state.explored} explored, "
               f"{state.skipped} skipped, {'exact' if exact else 'MISSED'}")
    click.echo(str(path))
    if not exact:
        sys.exit(1)


@cli.command()
@click.argument('instance', type=click.Path(exists=True, dir_okay=False))
@handled
def verify(instance):
    """Check that the oriented query edges determine the hidden poset"""
    graph = QueryGraph.load(instance)
    if audit_identifiable(graph):
        click.echo(f"OK: {graph!r} determines its poset")
        return
    logger.warning(f"{instance}: oriented query edges do not close to the ground truth")
    click.echo(f"FAIL: {graph!r} does not determine its poset", err=True)
    sys.exit(1)


if __name__ == '__main__':
    cli()
