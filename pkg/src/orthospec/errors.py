"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class OrthospecError(Exception):
    """Base class for library errors."""


class UnboundedTrimmer(OrthospecError, ValueError):
    """The trimmer has no finite range, so it cannot be normalized."""


class IntegrandError(OrthospecError, ValueError):
    """The integrand produced values the quadrature cannot handle."""


class DomainError(OrthospecError, ValueError):
    """An argument lies outside the domain of the requested function."""


class SolverError(OrthospecError, RuntimeError):
    """A root finder or iterative solver failed to converge."""

    def __init__(self, message: str, **diagnostics: object) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class NoMinimum(SolverError):
    """Bracket expansion for a minimizer ran past its limit."""


class NoTransition(OrthospecError):
    """No sign change of the regime indicator over the requested range."""


class DimensionError(OrthospecError, ValueError):
    """Matrix dimensions are inconsistent or too large."""
