"""Common functionality: tracing, timing and logging setup."""

# Standard library imports
import functools
import logging
import sys
import timeit


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"
VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO}


# -----------------------------------------------------------------------------
# functions
# -----------------------------------------------------------------------------
def function_trace(original_function):
    """Decorator function to help to trace function call entry and exit.

    Args:
        original_function (_type_): function above which the decorator is defined
    """

    @functools.wraps(original_function)
    def function_wrapper(*args, **kwargs):
        _logger = logging.getLogger(original_function.__module__)
        _logger.debug(f"Entering {original_function.__name__}")
        result = original_function(*args, **kwargs)
        _logger.debug(f"Exiting {original_function.__name__}")
        return result

    return function_wrapper


def setup_logging(verbosity: int = 0, stream=None) -> None:
    """Configure the root logger for command line runs.

    Logs always go to stderr (or ``stream``) so report files stay reproducible.

    Args:
        verbosity: 0 → WARNING, 1 → INFO, 2 or more → DEBUG
        stream: optional output stream, defaults to stderr
    """
    level = VERBOSITY_LEVELS.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=stream or sys.stderr, force=True)


class PerformanceTimer:
    """Context manager logging the wall time of an experiment in milliseconds."""

    def __init__(self, timer_name: str, pt_logger: logging.Logger | None = None):
        """Init for performance timer."""
        self._timer_name = timer_name
        self._logger = pt_logger or logging.getLogger(__name__)
        self.elapsed_ms = 0.0

    def __enter__(self):
        """Enter for performance timer."""
        self.start = timeit.default_timer()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        """Exit for performance timer."""
        self.elapsed_ms = (timeit.default_timer() - self.start) * 1000.0
        self._logger.info(f"Executing {self._timer_name} took {self.elapsed_ms:.1f} ms")


if __name__ == "__main__":
    raise Exception(f"{__file__}: This module should not be executed directly. Only for imports")
