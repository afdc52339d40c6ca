"""Exception types shared across the package."""

from __future__ import annotations


class TransportIdError(Exception):
    """Base class for package-specific failures."""


class ValidationError(TransportIdError):
    """A configuration or input record violates its documented contract."""


class SolverError(TransportIdError):
    """The transport solver failed to converge or produced invalid state."""


class TermEvaluationError(TransportIdError):
    """A candidate term produced non-finite values."""


class DegenerateColumnError(TransportIdError):
    """A design-matrix column has zero variance and cannot be normalized."""


class CollinearityError(TransportIdError):
    """The normalized design matrix is numerically rank deficient."""
