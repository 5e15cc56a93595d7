"""
Shared Utilities and Helpers
Error hierarchy, parameter validation, timing and seeded RNG derivation
"""

import functools
import logging
import time
from typing import Any, Callable, Dict, Tuple

import numpy as np

logger = logging.getLogger(__name__)


# ===================== ERRORS =====================

class GpsError(Exception):
    """Base class for every error raised by the sorting library"""


class CyclicInput(GpsError):
    """A DAG operation received a graph containing a directed cycle"""


class LengthMismatch(GpsError):
    """A linear extension does not have one entry per poset element"""


class NotAnEdge(GpsError):
    """A query was issued for a pair outside the visible query graph"""


class BudgetExceeded(GpsError):
    """Charging a query would push the accumulated cost over the budget"""


class Unsatisfiable(GpsError):
    """Generator parameters describe an instance that cannot exist"""


class InconsistentExtension(GpsError):
    """An oracle answer contradicts the order an algorithm relied on"""


class EmptyInput(GpsError):
    """A procedure that needs at least one vertex received none"""


class CycleInKnownEdges(GpsError):
    """The directed edges known so far contain a cycle"""


class TooLarge(GpsError):
    """Exact counting was requested above the configured size cap"""


class NoFeasibleThreshold(GpsError):
    """No weight threshold satisfies the gap condition for the estimate"""


class InvalidParams(GpsError):
    """Command or generator parameters failed validation"""


class ModelMismatch(GpsError):
    """The requested algorithm cannot run on the instance's query model"""


class InsufficientData(GpsError):
    """Too few report groups to compute a scaling fit"""


class ErrorHandler:
    """Central error handling for the command-line surface"""

    EXIT_CODES = {
        'InvalidParams': 2,
        'ModelMismatch': 2,
        'InsufficientData': 2,
    }

    @staticmethod
    def handle_error(error: Exception, context: str = "") -> int:
        """Log an error uniformly and return the process exit code for it"""
        error_type = type(error).__name__
        if isinstance(error, GpsError):
            logger.error(f"Error in {context}: {error_type}: {error}")
        else:
            logger.error(f"Error in {context}: {error_type}: {error}", exc_info=True)
        return ErrorHandler.EXIT_CODES.get(error_type, 1)


# ===================== VALIDATION =====================

class InputValidator:
    """Parameter validation for instance generation"""

    MODELS = ('er', 'bipartite', 'gpsc', 'weighted')
    GAP_PROFILES = ('uniform-log', 'separated')

    @staticmethod
    def validate_gen_params(params: Dict[str, Any]) -> None:
        """Raise InvalidParams describing every problem found in a parameter set"""
        errors = []
        model = params.get('model')
        if model not in InputValidator.MODELS:
            errors.append(f"model must be one of {', '.join(InputValidator.MODELS)}, got {model!r}")

        n = params.get('n')
        k = params.get('k')
        p = params.get('p')
        w = params.get('W')

        if model in ('er', 'gpsc', 'weighted'):
            if not isinstance(n, int) or n < 1:
                errors.append(f"n must be a positive integer, got {n!r}")
        if model in ('er', 'gpsc'):
            if not isinstance(k, int) or k < 1:
                errors.append(f"k must be a positive integer, got {k!r}")
            elif isinstance(n, int) and k > n:
                errors.append(f"k={k} exceeds n={n}")
        if model == 'er' and not InputValidator.is_probability(p, allow_zero=False):
            errors.append(f"p must lie in (0, 1], got {p!r}")
        if model == 'gpsc' and not InputValidator.is_probability(params.get('extra_edge_prob') or 0.0):
            errors.append("extra_edge_prob must lie in [0, 1]")
        if model == 'bipartite':
            for side in ('nA', 'nB'):
                value = params.get(side)
                if not isinstance(value, int) or value < 1:
                    errors.append(f"{side} must be a positive integer, got {value!r}")
            if not InputValidator.is_probability(params.get('density', 0.0)):
                errors.append("density must lie in [0, 1]")
        if model == 'weighted':
            if not isinstance(w, int) or w < 1:
                errors.append(f"W must be a positive integer, got {w!r}")
            if isinstance(n, int) and n < 2:
                errors.append("weighted instances need n >= 2")
            if params.get('gap_profile', 'uniform-log') not in InputValidator.GAP_PROFILES:
                errors.append(f"gap_profile must be one of {', '.join(InputValidator.GAP_PROFILES)}")

        seed = params.get('seed')
        if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
            errors.append(f"seed must be a 64-bit non-negative integer, got {seed!r}")

        if errors:
            raise InvalidParams('; '.join(errors))

    @staticmethod
    def is_probability(value: Any, allow_zero: bool = True) -> bool:
        """Validate a probability value"""
        try:
            val = float(value)
        except (TypeError, ValueError):
            return False
        if allow_zero:
            return 0.0 <= val <= 1.0
        return 0.0 < val <= 1.0


# ===================== PERFORMANCE =====================

class PerformanceMonitor:
    """Measure and log execution time"""

    SLOW_SECONDS = 5.0

    @staticmethod
    def timer(func: Callable) -> Callable:
        """Decorator to measure function execution time"""
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            result = func(*args, **kwargs)
            elapsed_time = time.perf_counter() - start_time

            if elapsed_time > PerformanceMonitor.SLOW_SECONDS:
                logger.warning(f"Slow operation: {func.__name__} took {elapsed_time:.2f}s")
            else:
                logger.debug(f"{func.__name__} took {elapsed_time:.3f}s")

            return result
        return wrapper

    @staticmethod
    def stopwatch() -> Callable[[], float]:
        """Return a callable reporting seconds elapsed since creation"""
        start = time.perf_counter()
        return lambda: time.perf_counter() - start


# ===================== RANDOMNESS =====================

def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """
    Build an independent generator for a (master seed, key path) pair.

    Keys are mixed into the seed sequence entropy, so trial 3 of seed 7 yields the
    same stream no matter how many other trials ran or in which order.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(keys)))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Derive a 64-bit integer seed from a master seed and key path"""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sorted_pair(u: int, v: int) -> Tuple[int, int]:
    """Canonical key of an undirected vertex pair"""
    return (u, v) if u < v else (v, u)
