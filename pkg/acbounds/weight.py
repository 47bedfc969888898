"""Weights, their norms, and the exact kernel of the convolution on the δ-grid."""

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate

from acbounds.exceptions import KernelQuadratureError, WeightError

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

WeightKind = Literal['box', 'gaussian', 'tabulated']
KernelMethod = Literal['auto', 'closed_form', 'quadrature']

NORMALIZATION_TOL = 1e-12
QUADRATURE_TOL = 1e-12
TRUNCATION_FLOOR = 1e-16
BOX_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class WeightSpec:
    """Symmetric decreasing weight with ‖w‖₁ = ‖w‖∞ = 1.

    ``box`` is the indicator of [-1/2, 1/2] and ``gaussian`` is exp(-πx²). Other
    Gaussian exponents are handled by rescaling the constant afterwards, see
    :func:`gaussian_means_constant`. ``tabulated`` weights are piecewise linear
    through samples on a symmetric grid and vanish outside it.
    """
    kind: WeightKind
    samples_x: Tuple[float, ...] = ()
    samples_w: Tuple[float, ...] = ()
    source: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ('box', 'gaussian', 'tabulated'):
            raise WeightError(f"Unknown weight kind: {self.kind!r}")
        if self.kind == 'tabulated':
            _check_tabulated(np.asarray(self.samples_x, dtype=float), np.asarray(self.samples_w, dtype=float))
        elif self.samples_x or self.samples_w:
            raise WeightError(f"Samples are only accepted for tabulated weights, not {self.kind!r}")

    @classmethod
    def box(cls) -> 'WeightSpec':
        """Indicator of [-1/2, 1/2]."""
        return cls(kind='box')

    @classmethod
    def gaussian(cls) -> 'WeightSpec':
        """exp(-πx²), the exponent for which ‖w‖₁ = ‖w‖∞ = 1."""
        return cls(kind='gaussian')

    @classmethod
    def tabulated(cls, xs, ws, source: Optional[str] = None) -> 'WeightSpec':
        """Piecewise linear weight through (x, w(x)) samples.

        Args:
            xs: Strictly increasing grid, symmetric about 0
            ws: Samples of a symmetric decreasing weight with ‖w‖₁ = ‖w‖∞ = 1
            source: Where the samples came from, recorded in reports

        Returns:
            WeightSpec of kind ``tabulated``

        Raises:
            WeightError: If the samples are not a normalized symmetric decreasing weight
        """
        return cls(
            kind='tabulated',
            samples_x=tuple(float(x) for x in xs),
            samples_w=tuple(float(v) for v in ws),
            source=source,
        )

    @property
    def support_radius(self) -> float:
        """Radius outside of which the weight vanishes (inf for the Gaussian)."""
        if self.kind == 'box':
            return BOX_HALF_WIDTH
        if self.kind == 'gaussian':
            return math.inf
        return float(self.samples_x[-1])

    @property
    def kinks(self) -> np.ndarray:
        """Points where w is not smooth; quadrature is split there."""
        if self.kind == 'box':
            return np.array([-BOX_HALF_WIDTH, BOX_HALF_WIDTH])
        if self.kind == 'gaussian':
            return np.empty(0)
        return np.asarray(self.samples_x, dtype=float)

    def evaluate(self, x) -> np.ndarray:
        """Vectorized evaluation of w."""
        x = np.asarray(x, dtype=float)
        if self.kind == 'box':
            return np.where(np.abs(x) <= BOX_HALF_WIDTH, 1.0, 0.0)
        if self.kind == 'gaussian':
            return np.exp(-math.pi * x * x)
        return np.interp(x, self.samples_x, self.samples_w, left=0.0, right=0.0)

    def describe(self) -> Dict[str, object]:
        """Descriptor written into reports and manifests."""
        if self.kind == 'box':
            return {"kind": "box", "formula": "indicator of [-1/2, 1/2]"}
        if self.kind == 'gaussian':
            return {"kind": "gaussian", "formula": "exp(-pi x^2)"}
        return {
            "kind": "tabulated",
            "source": self.source,
            "samples": len(self.samples_x),
            "support_radius": self.support_radius,
        }


@dataclass(frozen=True)
class WeightNorms:
    """L¹, squared L², L∞ and total-variation norms of a weight."""
    l1: float
    l2_squared: float
    linf: float
    tv: float

    def __post_init__(self) -> None:
        if abs(self.tv - 2.0 * self.linf) > NORMALIZATION_TOL:
            raise WeightError(f"Total variation {self.tv} differs from 2*linf = {2.0 * self.linf}")
        if self.l2_squared > self.l1 * self.linf * (1.0 + NORMALIZATION_TOL):
            raise WeightError("Squared L2 norm exceeds l1 * linf")


@dataclass(frozen=True)
class DiscretizedKernel:
    """Toeplitz sequence values[k] = w̃(kδ), k = 0..n-1."""
    delta: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if self.delta <= 0:
            raise WeightError(f"Grid step must be positive, got {self.delta}")
        if values.ndim != 1 or values.size == 0:
            raise WeightError("Kernel values must be a non-empty 1-D sequence")
        if np.any(values < -NORMALIZATION_TOL):
            raise WeightError("Kernel values must be nonnegative")
        if np.any(np.diff(values) > NORMALIZATION_TOL):
            k = int(np.argmax(np.diff(values) > NORMALIZATION_TOL))
            raise WeightError(f"Kernel is not non-increasing at lag {k}")
        if values[0] > 1.0 + NORMALIZATION_TOL:
            raise WeightError(f"Kernel value at lag 0 exceeds ||w||_inf = 1: {values[0]}")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def mass(self) -> float:
        """δ·Σ_{|k|<n} w̃(|k|δ), bounded by ‖w‖₁."""
        return float(self.delta * (self.values[0] + 2.0 * self.values[1:].sum()))


def _check_tabulated(xs: np.ndarray, ws: np.ndarray) -> None:
    """Reject samples that do not describe a normalized symmetric decreasing weight."""
    if xs.ndim != 1 or xs.shape != ws.shape or xs.size < 2:
        raise WeightError("Tabulated weight needs two equally long columns with at least two rows")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ws))):
        raise WeightError("Tabulated weight contains non-finite values")
    if np.any(np.diff(xs) <= 0):
        raise WeightError("Tabulated x values must be strictly increasing")
    if np.max(np.abs(xs + xs[::-1])) > NORMALIZATION_TOL:
        raise WeightError("Tabulated grid is not symmetric about 0")
    if np.max(np.abs(ws - ws[::-1])) > NORMALIZATION_TOL:
        raise WeightError("Tabulated weight is not symmetric: w(-x) != w(x)")
    if np.any(ws < 0):
        raise WeightError("Tabulated weight takes negative values")
    right = ws[xs >= 0]
    if np.any(np.diff(right) > NORMALIZATION_TOL):
        x_bad = xs[xs >= 0][int(np.argmax(np.diff(right) > NORMALIZATION_TOL))]
        raise WeightError(f"Tabulated weight increases after x = {x_bad}")
    linf = float(ws.max())
    if abs(linf - 1.0) > NORMALIZATION_TOL:
        raise WeightError(f"Tabulated weight has ||w||_inf = {linf!r}, expected 1 (rescale first)")
    l1 = float(integrate.trapezoid(ws, xs))
    if abs(l1 - 1.0) > NORMALIZATION_TOL:
        raise WeightError(f"Tabulated weight has ||w||_1 = {l1!r}, expected 1 (rescale first)")


def load_tabulated_weight(path: Union[str, Path]) -> WeightSpec:
    """Load a two-column (x, w(x)) text file as a tabulated weight.

    Columns may be separated by whitespace or commas; a header line is optional
    and lines starting with ``#`` are ignored.

    Raises:
        FileNotFoundError: If the file does not exist
        WeightError: If the samples fail the symmetric decreasing checks
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Weight file not found: {path}")

    table = pd.read_csv(path, sep=r'[\s,]+', header=None, comment='#', engine='python')
    table = table.apply(pd.to_numeric, errors='coerce')
    if table.shape[1] < 2:
        raise WeightError(f"Weight file {path} must have two columns")
    if table.iloc[0].isna().any():
        table = table.iloc[1:]
    table = table.iloc[:, :2].dropna(how='all')
    if table.isna().any().any():
        raise WeightError(f"Weight file {path} contains non-numeric rows")

    logger.info(f"Loaded {len(table)} weight samples from {path}")
    return WeightSpec.tabulated(table.iloc[:, 0].to_numpy(), table.iloc[:, 1].to_numpy(), source=str(path))


def weight_eval(w: WeightSpec, x: float) -> float:
    """Evaluate w at a single point.

    Tabulated weights return 0 outside the sampled range; the extrapolation is
    logged as a warning.
    """
    if w.kind == 'tabulated' and abs(x) > w.support_radius:
        logger.warning(f"Tabulated weight evaluated outside its samples at x={x}; returning 0")
        return 0.0
    return float(w.evaluate(x))


def weight_norms(w: WeightSpec) -> WeightNorms:
    """Norms of w: closed forms for box and gaussian, exact piecewise integrals for tabulated."""
    if w.kind == 'box':
        return WeightNorms(l1=1.0, l2_squared=1.0, linf=1.0, tv=2.0)
    if w.kind == 'gaussian':
        # ∫ exp(-2πx²) dx = 1/√2
        return WeightNorms(l1=1.0, l2_squared=1.0 / math.sqrt(2.0), linf=1.0, tv=2.0)

    xs = np.asarray(w.samples_x)
    ws = np.asarray(w.samples_w)
    h = np.diff(xs)
    l1 = float(integrate.trapezoid(ws, xs))
    # exact for the square of a linear piece
    l2_squared = float(np.sum(h * (ws[:-1] ** 2 + ws[:-1] * ws[1:] + ws[1:] ** 2) / 3.0))
    linf = float(ws.max())
    return WeightNorms(l1=l1, l2_squared=l2_squared, linf=linf, tv=2.0 * linf)


def _tent_cdf(u: np.ndarray, delta: float) -> np.ndarray:
    """Mass of the unit-mass tent of half-width δ on (-inf, u]."""
    u = np.clip(u, -delta, delta)
    left = (delta + u) ** 2 / (2.0 * delta ** 2)
    right = 1.0 - (delta - u) ** 2 / (2.0 * delta ** 2)
    return np.where(u <= 0, left, right)


def _box_kernel(delta: float, lags: np.ndarray) -> np.ndarray:
    s = lags * delta
    return _tent_cdf(BOX_HALF_WIDTH - s, delta) - _tent_cdf(-BOX_HALF_WIDTH - s, delta)


def _tent_average(w: WeightSpec, s: float, delta: float) -> float:
    """δ⁻² ∫_{s-δ}^{s+δ} w(t)(δ - |t - s|) dt, written on the unit window."""
    if w.kind != 'gaussian' and abs(s) - delta >= w.support_radius:
        return 0.0

    kinks = w.kinks
    points = np.concatenate([(kinks - s) / delta, (s - kinks) / delta]) if kinks.size else np.empty(0)
    points = np.unique(points[(points > 0.0) & (points < 1.0)])

    def integrand(u: float) -> float:
        return (1.0 - u) * float(w.evaluate(s + delta * u) + w.evaluate(s - delta * u))

    options = {"epsabs": QUADRATURE_TOL, "epsrel": QUADRATURE_TOL, "limit": max(200, 4 * points.size + 50)}
    if points.size:
        options["points"] = points
    value, _ = integrate.quad(integrand, 0.0, 1.0, **options)
    return value


def build_kernel(
    w: WeightSpec,
    delta: float,
    n: int,
    method: KernelMethod = 'auto',
    truncate: bool = False,
) -> DiscretizedKernel:
    """Build w̃(kδ) for k = 0..n-1.

    Args:
        w: Weight to discretize
        delta: Grid step δ
        n: Number of lags to store
        method: ``closed_form`` (box only), ``quadrature``, or ``auto``
        truncate: Store lags below 1e-16 as exact zeros (lower-bound paths only)

    Returns:
        DiscretizedKernel holding the triangular-window averages of w

    Raises:
        ValueError: If delta or n are out of range
        KernelQuadratureError: If the adaptive quadrature does not converge for some lag
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")

    lags = np.arange(n, dtype=float)
    use_closed_form = method == 'closed_form' or (method == 'auto' and w.kind == 'box')
    if use_closed_form:
        if w.kind != 'box':
            raise ValueError(f"No closed form kernel for {w.kind!r} weights")
        values = _box_kernel(delta, lags)
    else:
        values = np.empty(n)
        with warnings.catch_warnings():
            warnings.simplefilter('error', integrate.IntegrationWarning)
            for k in range(n):
                try:
                    values[k] = _tent_average(w, k * delta, delta)
                except integrate.IntegrationWarning as e:
                    raise KernelQuadratureError(k, str(e)) from e

    if truncate:
        values = np.where(values < TRUNCATION_FLOOR, 0.0, values)

    # monotone up to quadrature noise
    values = np.minimum.accumulate(np.maximum(values, 0.0))
    logger.debug(f"Built {w.kind} kernel with {n} lags at delta={delta}")
    return DiscretizedKernel(delta=delta, values=values)


def kernel_oracle(w: WeightSpec, delta: float, s: float, tol: float = 1e-10) -> float:
    """Brute-force δ⁻² ∫_s^{s+δ} ∫_0^δ w(y - x) dx dy by nested adaptive quadrature.

    Reference used to validate :func:`build_kernel`; both variables are rescaled
    to the unit square and the inner integral is split at the kinks of w.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    kinks = w.kinks

    def inner(v: float) -> float:
        # y - x = s + δ(v - u)
        points = v + (s - kinks) / delta if kinks.size else np.empty(0)
        points = np.unique(points[(points > 0.0) & (points < 1.0)])
        options = {"epsabs": tol, "epsrel": tol, "limit": max(200, 4 * points.size + 50)}
        if points.size:
            options["points"] = points
        value, _ = integrate.quad(lambda u: float(w.evaluate(s + delta * (v - u))), 0.0, 1.0, **options)
        return value

    outer_points = np.unique(np.concatenate([(kinks - s) / delta, (kinks - s) / delta + 1.0])) if kinks.size else np.empty(0)
    outer_points = outer_points[(outer_points > 0.0) & (outer_points < 1.0)]
    options = {"epsabs": tol, "epsrel": tol, "limit": max(200, 4 * outer_points.size + 50)}
    if outer_points.size:
        options["points"] = outer_points
    value, _ = integrate.quad(inner, 0.0, 1.0, **options)
    return value


def kernel_table(kernel: DiscretizedKernel) -> pd.DataFrame:
    """Rows (k, kδ, w̃(kδ)) for the kernel dump."""
    lags = np.arange(kernel.n)
    return pd.DataFrame({"k": lags, "s": lags * kernel.delta, "w_tilde": kernel.values})


def rescale_constant(c_opt: float, height: float = 1.0, width: float = 1.0) -> float:
    """Optimal constant of h·w(x/t) given the constant of w: h·√t·C_opt(w)."""
    if height <= 0 or width <= 0:
        raise ValueError("height and width must be positive")
    return height * math.sqrt(width) * c_opt


def gaussian_means_constant(exponent: float, c_canonical: float) -> float:
    """Constant for the probability weight (a/π)^{1/2} exp(-a x²) from the one of exp(-πx²)."""
    if exponent <= 0:
        raise ValueError(f"Gaussian exponent must be positive, got {exponent}")
    # exp(-a x²) = exp(-π (x/t)²) with t = √(π/a)
    return rescale_constant(
        c_canonical,
        height=math.sqrt(exponent / math.pi),
        width=math.sqrt(math.pi / exponent),
    )
