"""Fixed-point iteration on the Euler-Lagrange equation of the autocorrelation problem.

Extremizers satisfy f/‖f‖₂² = max(2(w ∗ f)/Q(f,f) - 1/‖f‖₁, 0). Iterating the
right-hand side is not known to converge, but every iterate is nonnegative,
so its ratio Q(f,f)/(‖f‖₁‖f‖₂) is a valid lower bound on C_opt whatever happens.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from acbounds.exceptions import FixedPointCollapseError
from acbounds.stepspace import StepFunction, cell_count, convolution_operator
from acbounds.weight import DiscretizedKernel

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class FixedPointResult:
    """Final iterate, its ratio, and the (iteration, value, sup_change) trace."""
    value: float
    extremizer: StepFunction = field(repr=False)
    iterations: int
    converged: bool
    last_delta: float
    trace: Tuple[Tuple[int, float, float], ...] = field(default=(), repr=False)


def default_initial_guess(delta: float, radius: float, half_width: Optional[float] = None) -> StepFunction:
    """Centred triangular bump supported on [-a/2, a/2], or on [-half_width, half_width]."""
    n = cell_count(delta, radius)
    midpoints = (np.arange(n) + 0.5) * delta - radius
    half_width = radius / 2.0 if half_width is None else half_width
    values = np.maximum(1.0 - np.abs(midpoints) / half_width, 0.0)
    if not values.any():
        values[n // 2] = 1.0
    return StepFunction(delta, radius, values)


def restart_guesses(delta: float, radius: float, count: int) -> List[StepFunction]:
    """The default guess followed by count - 1 triangles with half-widths spread over [a/4, a]."""
    guesses = [default_initial_guess(delta, radius)]
    if count > 1:
        guesses += [default_initial_guess(delta, radius, width) for width in np.linspace(radius / 4.0, radius, count - 1)]
    return guesses


def _normalize(values: np.ndarray, delta: float) -> np.ndarray:
    l1 = delta * float(values.sum())
    l2 = math.sqrt(delta * float(np.dot(values, values)))
    return values / math.sqrt(l1 * l2)


def _ratio(values: np.ndarray, conv_values: np.ndarray, delta: float) -> float:
    quad = delta * float(np.dot(values, conv_values))
    l1 = delta * float(values.sum())
    l2 = math.sqrt(delta * float(np.dot(values, values)))
    return quad / (l1 * l2)


def fixed_point_iterate(
    kernel: DiscretizedKernel,
    f0: StepFunction,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    relaxation: float = 1.0,
) -> FixedPointResult:
    """Iterate f ← ‖f‖₂²·max(2(w̃ ∗ f)/Q(f,f) - 1/‖f‖₁, 0), renormalized to ‖f‖₁‖f‖₂ = 1.

    Args:
        kernel: Discretized kernel with at least f0.n lags
        f0: Nonnegative, nonzero starting function
        tol: Bound on both the relative sup-norm change and the relative change of the ratio
        max_iter: Iteration cap
        relaxation: θ in (0, 1]; the next iterate is (1-θ)f + θ·update

    Returns:
        FixedPointResult for the last iterate

    Raises:
        ValueError: If f0 is negative somewhere, zero, or relaxation is out of range
        FixedPointCollapseError: If an update clips every cell to zero
    """
    if not 0.0 < relaxation <= 1.0:
        raise ValueError(f"relaxation must lie in (0, 1], got {relaxation}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    values = np.array(f0.values, dtype=float)
    if values.min() < 0 or not values.any():
        raise ValueError("The starting function must be nonnegative and nonzero")

    delta = f0.delta
    conv = convolution_operator(kernel, f0.n)
    values = _normalize(values, delta)
    conv_values = conv.matvec(values)
    value = _ratio(values, conv_values, delta)

    trace: List[Tuple[int, float, float]] = [(0, value, math.nan)]
    converged = False
    change = math.inf
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        l1 = delta * float(values.sum())
        l2_sq = delta * float(np.dot(values, values))
        quad = delta * float(np.dot(values, conv_values))
        update = l2_sq * np.maximum(2.0 * conv_values / quad - 1.0 / l1, 0.0)
        if not update.any():
            raise FixedPointCollapseError(
                f"Fixed-point iterate vanished at iteration {iterations}; try a wider initial guess"
            )
        if relaxation < 1.0:
            update = (1.0 - relaxation) * values + relaxation * _normalize(update, delta)
        update = _normalize(update, delta)

        change = float(np.max(np.abs(update - values))) / float(np.max(update))
        values = update
        conv_values = conv.matvec(values)
        new_value = _ratio(values, conv_values, delta)
        value_change = abs(new_value - value) / new_value
        value = new_value
        trace.append((iterations, value, change))

        if change <= tol and value_change <= tol:
            converged = True
            break

    if not converged:
        logfire.warning(f"Fixed point did not converge in {max_iter} iterations (last change {change:.3e})")
    logger.info(f"Fixed point value {value:.10f} after {iterations} iterations")

    return FixedPointResult(
        value=value,
        extremizer=StepFunction(delta, f0.radius, values),
        iterations=iterations,
        converged=converged,
        last_delta=change,
        trace=tuple(trace),
    )


def fixed_point_restarts(
    kernel: DiscretizedKernel,
    initial_guesses: Iterable[StepFunction],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    relaxation: float = 1.0,
) -> List[FixedPointResult]:
    """Run the iteration from several starts, best value first; collapsed starts are skipped."""
    results = []
    for i, f0 in enumerate(initial_guesses):
        try:
            results.append(fixed_point_iterate(kernel, f0, tol, max_iter, relaxation))
        except FixedPointCollapseError as e:
            logfire.warning(f"Restart {i} collapsed: {e}")
    return sorted(results, key=lambda r: -r.value)

