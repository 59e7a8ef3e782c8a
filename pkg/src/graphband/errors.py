"""Exception types shared across the package."""

from __future__ import annotations


class GraphBandError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GraphBandError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(GraphBandError, ArithmeticError):
    """A linear solve or factorization failed or fell outside tolerance.

    ``cond`` carries a condition-number estimate of the offending system
    when one is available.
    """

    def __init__(self, message: str, cond: float | None = None):
        super().__init__(message)
        self.cond = cond


class StateError(GraphBandError, RuntimeError):
    """A stateful protocol (e.g. select/observe interleaving) was violated."""


class ConfigError(GraphBandError, ValueError):
    """An experiment configuration failed schema validation.

    ``keys`` lists the offending key paths.
    """

    def __init__(self, message: str, keys: list[str] | None = None):
        super().__init__(message)
        self.keys = keys or []


class ParseError(GraphBandError, ValueError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line
