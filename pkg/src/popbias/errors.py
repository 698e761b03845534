"""
Exception hierarchy.  The CLI maps these onto process exit codes.
"""

from __future__ import annotations


class PopbiasError(Exception):
    "Base class for all errors raised by this package."


class DataParseError(PopbiasError):
    """
    A raw input file could not be parsed.

    Attributes:
        path: the offending file.
        line: 1-based line number, or ``None`` for file-level problems.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)


class InvariantViolation(PopbiasError):
    "A data invariant (uniqueness, rating bounds, totality, ...) does not hold."


class DuplicateInteractionError(InvariantViolation):
    "A (user, item) pair occurs more than once in an interaction log."


class MissingGroupError(InvariantViolation):
    "A user in the interaction log has no sensitive-group label."


class MetricError(PopbiasError, ValueError):
    "A metric is undefined for its input (empty group, zero denominator, ...)."


class SimulationAborted(PopbiasError):
    """
    The feedback loop stopped because a metric could not be computed.

    Attributes:
        iteration: 1-based iteration at which the run stopped.
        metric: name of the failing metric, if known.
    """

    def __init__(self, message: str, iteration: int, metric: str | None = None):
        self.iteration = iteration
        self.metric = metric
        where = f"iteration {iteration}"
        if metric:
            where += f", metric {metric}"
        super().__init__(f"{where}: {message}")
