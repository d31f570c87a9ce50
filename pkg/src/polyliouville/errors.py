"""Exception hierarchy shared by every module."""

from __future__ import annotations


class LiouvilleError(Exception):
    """Base class for all package errors."""


class InvalidOrderError(LiouvilleError, ValueError):
    pass


class ConfigError(LiouvilleError, ValueError):
    pass


class DomainError(LiouvilleError, ValueError):
    pass


class SingularEvaluationError(LiouvilleError, ValueError):
    pass


class BoundaryProximityError(LiouvilleError, ValueError):
    pass


class SignError(LiouvilleError, ValueError):
    pass


class NoStandardSolutionError(LiouvilleError, ValueError):
    pass


class ResolutionError(LiouvilleError, ValueError):
    pass


class ToleranceError(LiouvilleError, RuntimeError):
    """A numerical procedure did not reach its tolerance.

    ``achieved`` carries the error estimate that was reached.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class SolveError(LiouvilleError, RuntimeError):
    pass


class RankDeficiencyError(SolveError):
    pass


class ConditioningError(SolveError):
    pass


class ContractionError(LiouvilleError, RuntimeError):
    pass


class NoCriticalPointError(LiouvilleError, RuntimeError):
    pass


class MultiplierError(LiouvilleError, RuntimeError):
    """Multipliers c_ij did not vanish at the returned configuration."""

    def __init__(self, message: str, c=None):
        super().__init__(message)
        self.c = c
