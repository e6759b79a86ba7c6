"""Typed errors raised by the curve-space, spectral and simulation layers."""


class FcsError(Exception):
    """Base class for all package errors."""


class ConfigError(FcsError):
    """Invalid run configuration (bad flag value, unknown key, violated constraint)."""


class OutOfRange(FcsError):
    """Evaluation point outside the curve's grid range."""


class TailNotNegligible(FcsError):
    """Operation requires h(inf) = 0; the tail beyond the grid would dominate."""


class GridMismatch(FcsError):
    """Two sampled objects live on different grids."""


class NotDecayed(FcsError):
    """Samples do not decay at the line-grid boundary; the transform would alias."""


class SingularGram(FcsError):
    """Gram matrix of the basis is not positive definite."""


class EigenFailure(FcsError):
    """Generalized symmetric eigensolver did not converge."""


class RankTooLarge(FcsError):
    """Requested operator rank exceeds the number of retained singular values."""


class BasisMismatch(FcsError):
    """Operator, singular system and data do not share a basis/grid."""


class HorizonExceeded(FcsError):
    """Shift or step goes beyond the grid's translation horizon."""


class BadThreshold(FcsError):
    """Hitting-time level K is not above the initial curve norm."""


class MissingIncrements(FcsError):
    """Path ensemble lacks the recorded Brownian increments required for coupling."""


class EmptyEnsemble(FcsError):
    """Ensemble carries no paths."""
