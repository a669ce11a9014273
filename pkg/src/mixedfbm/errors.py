"""Semantic exception and warning types shared across the package."""

__all__ = [
    "DomainError",
    "AccuracyError",
    "IllConditionedError",
    "AccuracyWarning",
]


class DomainError(ValueError):
    """Raised when inputs fall outside the mathematically valid domain."""


class AccuracyError(RuntimeError):
    """Raised when a numerical routine cannot certify its accuracy target."""


class IllConditionedError(AccuracyError):
    """Raised when a linear system is too ill-conditioned to trust."""


class AccuracyWarning(UserWarning):
    """Emitted when a result is returned but fell short of the accuracy goal."""
