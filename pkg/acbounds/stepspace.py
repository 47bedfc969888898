"""Step functions on the δ-grid over [-a, a): norms, projection and the convolution form.

All sums carry the δ-weighted counting measure, so for a step function with
cell values v_i: ‖f‖₁ = δΣ|v_i|, ‖f‖₂² = δΣv_i², ∫f = δΣv_i.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy import fft, integrate, linalg

from acbounds.exceptions import GridError
from acbounds.weight import DiscretizedKernel

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

GRID_TOL = 1e-9
RADIUS_TOL = 1e-12


def cell_count(delta: float, radius: float) -> int:
    """N = 2a/δ, which must be an integer."""
    if delta <= 0 or radius <= 0:
        raise GridError(f"delta and radius must be positive, got delta={delta}, radius={radius}")
    ratio = 2.0 * radius / delta
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > GRID_TOL * max(1.0, ratio):
        raise GridError(f"Radius {radius} is not a multiple of delta/2 = {delta / 2}")
    return n


def grid_radius(radius: float, delta: float) -> float:
    """Round a radius up to the nearest multiple of δ so that N is even."""
    if radius <= 0:
        raise GridError(f"radius must be positive, got {radius}")
    return math.ceil(radius / delta - GRID_TOL) * delta


@dataclass(frozen=True)
class StepFunction:
    """Function constant on the cells [iδ - a, (i+1)δ - a), i = 0..N-1."""
    delta: float
    radius: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise GridError("Step function values must be one-dimensional")
        n = cell_count(self.delta, self.radius)
        if values.size != n:
            raise GridError(f"Expected {n} cells for radius {self.radius} and delta {self.delta}, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.delta - self.radius


@dataclass(frozen=True)
class StepNorms:
    l1: float
    l2: float
    integral: float
    l12: float


@dataclass(frozen=True)
class MixedNormParams:
    """λ, the support radius a, and the derived b_λ of the whitening operator A_λ."""
    lam: float
    radius: float
    b_lambda: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'b_lambda', solve_b_lambda(self.lam, self.radius))

    @property
    def sqrt_lam(self) -> float:
        return math.sqrt(self.lam)

    @property
    def inverse_shift(self) -> float:
        """Coefficient β of A⁻¹ = λ^{-1/2}(Id - β|1⟩⟨1|)."""
        return self.b_lambda / (self.sqrt_lam + 2.0 * self.radius * self.b_lambda)


def solve_b_lambda(lam: float, radius: float) -> float:
    """Positive root of λ⁻¹ = 2√λ·b + 2a·b².

    Written as λ⁻¹ / (√λ + √(λ + 2a/λ)) to avoid cancellation for large λ.
    """
    if lam <= 0 or radius <= 0:
        raise ValueError(f"lambda and radius must be positive, got lambda={lam}, radius={radius}")
    return (1.0 / lam) / (math.sqrt(lam) + math.sqrt(lam + 2.0 * radius / lam))


class ToeplitzOperator:
    """Symmetric Toeplitz block x ↦ scale·Σ_j t_{|i-j|} x_j of a fixed size.

    The product uses a circulant embedding of length 2·size and real FFTs;
    ``matvec_direct`` is the dense O(size²) reference.
    """

    def __init__(self, first_column: np.ndarray, size: int, scale: float = 1.0):
        first_column = np.asarray(first_column, dtype=float)
        if size < 1:
            raise GridError(f"Toeplitz size must be at least 1, got {size}")
        if first_column.size < size:
            raise GridError(f"Kernel has {first_column.size} lags but a block of {size} cells needs {size}")
        self.size = size
        self.scale = scale
        self.top = first_column[:size]

        circ = np.zeros(2 * size)
        circ[:size] = self.top
        circ[size + 1:] = self.top[1:][::-1]
        self._circ_fft = fft.rfft(circ)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise GridError(f"Expected a vector of length {self.size}, got shape {x.shape}")
        product = fft.irfft(self._circ_fft * fft.rfft(x, n=2 * self.size), n=2 * self.size)[:self.size]
        return self.scale * product

    def matvec_direct(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.scale * (linalg.toeplitz(self.top) @ x)

    def dense(self) -> np.ndarray:
        return self.scale * linalg.toeplitz(self.top)


def convolution_operator(kernel: DiscretizedKernel, size: int) -> ToeplitzOperator:
    """The grid convolution g ↦ w̃ ∗ g = δΣ_j w̃(|i-j|δ) g_j on a block of ``size`` cells."""
    return ToeplitzOperator(kernel.values, size, scale=kernel.delta)


def _check_same_grid(f: StepFunction, g: StepFunction) -> None:
    if f.n != g.n or abs(f.delta - g.delta) > RADIUS_TOL * f.delta:
        raise GridError(f"Step functions live on different grids ({f.n} vs {g.n} cells)")


def _check_radius(f: StepFunction, p: MixedNormParams) -> None:
    if abs(f.radius - p.radius) > RADIUS_TOL * max(1.0, p.radius):
        raise GridError(f"Step function radius {f.radius} does not match parameter radius {p.radius}")


def project_delta(f: Callable[[float], float], delta: float, radius: float) -> StepFunction:
    """[f]_δ: the average of f over every cell of the grid on [-a, a)."""
    n = cell_count(delta, radius)
    values = np.empty(n)
    for i in range(n):
        left = i * delta - radius
        average, _ = integrate.quad(lambda u: f(left + delta * u), 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
        values[i] = average
    return StepFunction(delta, radius, values)


def embed(block: np.ndarray, delta: float, radius: float, offset: Optional[int] = None) -> StepFunction:
    """Place the cell values of a block inside the [-a, a) grid, zero elsewhere.

    Without an offset the block is centred; when its parity differs from N it
    sits half a cell to the left of centre.
    """
    block = np.asarray(block, dtype=float)
    n = cell_count(delta, radius)
    if block.size > n:
        raise GridError(f"Block of {block.size} cells does not fit in {n} cells")
    if offset is None:
        offset = (n - block.size) // 2
    values = np.zeros(n)
    values[offset:offset + block.size] = block
    return StepFunction(delta, radius, values)


def norms(f: StepFunction) -> StepNorms:
    """L¹, L², integral and the mixed L^{1:2} norm sqrt(‖f‖₁‖f‖₂)."""
    l1 = f.delta * float(np.abs(f.values).sum())
    l2 = math.sqrt(f.delta * float(np.dot(f.values, f.values)))
    integral = f.delta * float(f.values.sum())
    return StepNorms(l1=l1, l2=l2, integral=integral, l12=math.sqrt(l1 * l2))


def h_lambda_norm_sq(f: StepFunction, p: MixedNormParams) -> float:
    """‖f‖²_{H_λ} = λ‖f‖₂² + λ⁻¹|∫f|²."""
    _check_radius(f, p)
    fn = norms(f)
    return p.lam * fn.l2 ** 2 + fn.integral ** 2 / p.lam


def b_lambda_norm_sq(f: StepFunction, p: MixedNormParams) -> float:
    """‖f‖²_{B_λ} = λ‖f‖₂² + λ⁻¹(∫|f|)²."""
    _check_radius(f, p)
    fn = norms(f)
    return p.lam * fn.l2 ** 2 + fn.l1 ** 2 / p.lam


def quadratic_form(kernel: DiscretizedKernel, f: StepFunction, g: StepFunction) -> float:
    """⟨f, w̃ ∗ g⟩ = δ²Σ_{i,j} f_i w̃(|i-j|δ) g_j, equal to ∫∫ f(x)g(y)w(x-y) for step functions."""
    _check_same_grid(f, g)
    if abs(kernel.delta - f.delta) > RADIUS_TOL * f.delta:
        raise GridError(f"Kernel step {kernel.delta} differs from grid step {f.delta}")
    operator = convolution_operator(kernel, f.n)
    return f.delta * float(np.dot(f.values, operator.matvec(g.values)))


def witness_ratio(kernel: DiscretizedKernel, f: StepFunction) -> float:
    """Q(f,f)/(‖f‖₁‖f‖₂), a lower bound on C_opt for any nonzero f."""
    fn = norms(f)
    if fn.l1 == 0:
        raise ValueError("The zero function has no ratio")
    return quadratic_form(kernel, f, f) / (fn.l1 * fn.l2)


def apply_a_array(values: np.ndarray, lam: float, b_lambda: float, delta: float) -> np.ndarray:
    """√λ·v + b_λ(δΣv)·1 on raw cell values."""
    return math.sqrt(lam) * values + b_lambda * delta * values.sum()


def apply_a_inv_array(values: np.ndarray, lam: float, inverse_shift: float, delta: float) -> np.ndarray:
    """λ^{-1/2}(v - β(δΣv)·1), the Sherman-Morrison inverse of :func:`apply_a_array`."""
    return (values - inverse_shift * delta * values.sum()) / math.sqrt(lam)


def apply_A(f: StepFunction, p: MixedNormParams) -> StepFunction:
    """A_λ f = √λ f + b_λ (∫f)·1."""
    _check_radius(f, p)
    return StepFunction(f.delta, f.radius, apply_a_array(f.values, p.lam, p.b_lambda, f.delta))


def apply_A_inv(f: StepFunction, p: MixedNormParams) -> StepFunction:
    """A_λ⁻¹ f = λ^{-1/2}(f - b_λ/(√λ + 2a b_λ)·(∫f)·1)."""
    _check_radius(f, p)
    return StepFunction(f.delta, f.radius, apply_a_inv_array(f.values, p.lam, p.inverse_shift, f.delta))


def extremizer_rows(f: StepFunction) -> Dict[str, np.ndarray]:
    """Cell midpoints and values rescaled so that ‖f‖₁‖f‖₂ = 1."""
    fn = norms(f)
    if fn.l1 == 0:
        raise ValueError("Cannot normalize the zero function")
    # ‖cf‖₁‖cf‖₂ = c²‖f‖₁‖f‖₂
    scale = 1.0 / math.sqrt(fn.l1 * fn.l2)
    return {"x": f.midpoints, "value": f.values * scale}
