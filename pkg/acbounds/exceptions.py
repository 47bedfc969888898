"""Exceptions raised by the acbounds solvers."""

from typing import Any, Optional


class AcboundsError(Exception):
    """Base exception for acbounds-related errors."""
    pass


class ConfigError(AcboundsError):
    """Invalid or inconsistent run configuration."""
    pass


class WeightError(AcboundsError):
    """A weight failed validation (symmetry, monotonicity or normalization)."""
    pass


class GridError(AcboundsError):
    """Step functions, kernels or radii that do not live on the same grid."""
    pass


class KernelQuadratureError(AcboundsError):
    """Adaptive quadrature did not converge for one lag of the kernel."""

    def __init__(self, lag: int, message: str) -> None:
        self.lag = lag
        super().__init__(f"Kernel quadrature failed at lag k={lag}: {message}")


class NoFeasibleSupportError(AcboundsError):
    """No scanned support size produced a usable nonnegative eigenvector."""

    def __init__(self, message: str, best_candidate: Optional[Any] = None) -> None:
        self.best_candidate = best_candidate
        super().__init__(message)


class FixedPointCollapseError(AcboundsError):
    """The fixed-point update clipped every cell to zero."""
    pass


class ValidationError(AcboundsError):
    """A value failed validation before being stored or used."""
    pass
