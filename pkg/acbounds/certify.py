"""Certified bounds on C_opt from per-(λ, δ) spectral values.

The lower bound is witnessed by a nonnegative step function. The upper bound
adds the discretization error of each grid λ to its value, then the slack
between grid points allowed by the 1-Lipschitz and secant regularity of c_λ.
Everything is certified at the level of formulas; floating-point rounding is
acknowledged in the report, not bounded.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize

from acbounds.exceptions import AcboundsError, GridError
from acbounds.spectral import BlockDiagnostic, SpectralOptions, SpectralSolution, scan_lambda_chunk, solve_c_lambda_delta
from acbounds.stepspace import MixedNormParams, StepFunction, cell_count, grid_radius, norms, witness_ratio
from acbounds.weight import DiscretizedKernel, WeightNorms, WeightSpec, build_kernel, weight_norms

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

RadiusMode = Literal['coarse', 'fine']

BOOTSTRAP_DELTA = 0.05
BOOTSTRAP_RADIUS = 2.0
BOOTSTRAP_LAMBDA = 1.0
REFINEMENT_FACTOR = 10

TRUNCATION_NOTE = (
    "The domain is truncated to [-a, a] with a from the support bound for extremizers; "
    "no truncation error term is added."
)
ROUNDING_NOTE = "Bounds are certified at the formula level; floating-point rounding is not bounded."
ESTIMATE_NOTE = "The discretization error is 16 delta^2 / (pi^2 c lambda^2) at every lambda of the sweep."

# (kernel, λ chunks, radius, options) -> one summary row per λ, in grid order
ChunkRunner = Callable[[DiscretizedKernel, List[np.ndarray], float, SpectralOptions], List[Dict[str, object]]]


class SweepConfig(BaseModel):
    """Grid of a λ sweep at fixed δ and domain radius."""
    model_config = ConfigDict(frozen=True)

    delta: float = Field(gt=0)
    lambda_lo: float = Field(gt=0)
    lambda_hi: float = Field(gt=0)
    lambda_step: float = Field(gt=0)
    radius: float = Field(gt=0)
    c_lb_prior: float = Field(default=0.0, ge=0)
    radius_mode: str = 'user'
    refine: bool = True
    k_scan: Literal['pruned', 'full'] = 'pruned'
    chunk_size: int = Field(default=25, ge=1)

    @model_validator(mode='after')
    def _check_grid(self) -> 'SweepConfig':
        if self.lambda_hi < self.lambda_lo:
            raise ValueError(f"lambda_hi={self.lambda_hi} is below lambda_lo={self.lambda_lo}")
        try:
            cell_count(self.delta, self.radius)
        except GridError as e:
            raise ValueError(str(e))
        return self

    @property
    def cells(self) -> int:
        return cell_count(self.delta, self.radius)

    def lambda_grid(self) -> np.ndarray:
        """Points lo, lo + Δλ, ... with the last one at or beyond hi."""
        count = int(math.ceil((self.lambda_hi - self.lambda_lo) / self.lambda_step - 1e-9)) + 1
        return self.lambda_lo + self.lambda_step * np.arange(count)

    def spectral_options(self) -> SpectralOptions:
        return SpectralOptions(k_scan=self.k_scan)


@dataclass(frozen=True)
class LambdaPoint:
    """Certified quantities at one grid λ."""
    sweep_pass: str
    lam: float
    c_lambda_delta: float
    support_cells: int
    feasible: bool
    iterations: int
    residual: float
    converged: bool
    degenerate: bool
    discretization_error: float
    lambda_grid_slack: float
    second_mu: Optional[float] = None
    blocks: Tuple[BlockDiagnostic, ...] = field(default=(), repr=False)

    @property
    def upper_contribution(self) -> float:
        return self.c_lambda_delta + self.discretization_error + self.lambda_grid_slack

    def row(self) -> Dict[str, object]:
        return {
            "pass": self.sweep_pass,
            "lambda": self.lam,
            "c_lambda_delta": self.c_lambda_delta,
            "support_cells": self.support_cells,
            "feasible": self.feasible,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "second_mu": self.second_mu,
            "discretization_error": self.discretization_error,
            "lambda_grid_slack": self.lambda_grid_slack,
            "upper_contribution": self.upper_contribution,
        }

    def block_rows(self) -> List[Dict[str, object]]:
        """One row per block scanned at this λ."""
        return [{"pass": self.sweep_pass, "lambda": self.lam, **block.row()} for block in self.blocks]


@dataclass(frozen=True)
class SweepPass:
    name: str
    lambda_step: float
    points: Tuple[LambdaPoint, ...]

    @property
    def lower(self) -> float:
        return max(p.c_lambda_delta for p in self.points)

    @property
    def upper(self) -> float:
        return max(p.upper_contribution for p in self.points)

    @property
    def best(self) -> LambdaPoint:
        return max(self.points, key=lambda p: p.c_lambda_delta)

    def summary(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "lambda_step": self.lambda_step,
            "points": len(self.points),
            "lower": self.lower,
            "upper": self.upper,
            "lambda_star": self.best.lam,
        }


@dataclass(frozen=True)
class ErrorTerms:
    discretization: float
    lambda_grid: float
    radius_note: str = TRUNCATION_NOTE
    rounding_note: str = ROUNDING_NOTE
    estimate_note: str = ESTIMATE_NOTE


@dataclass(frozen=True)
class BoundsReport:
    """Certified interval [lower, upper] for C_opt and the witnessing extremizer."""
    lower: float
    upper: float
    lambda_star: float
    delta: float
    lambda_step: float
    radius: float
    radius_mode: str
    cells: int
    weight: Dict[str, object]
    c_lb_prior: float
    passes: Tuple[SweepPass, ...]
    error_terms: ErrorTerms
    extremizer: StepFunction = field(repr=False)
    witness_ratio: float
    norm_ratio: float
    range_covered: bool
    infeasible_points: int

    @property
    def per_lambda(self) -> List[LambdaPoint]:
        return [point for sweep_pass in self.passes for point in sweep_pass.points]

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def discretization_error_bound(c_lower_at_lambda: float, lam: float, delta: float) -> float:
    """16δ²/(π²·c·λ²); a lower bound for c_λ in the denominator keeps the bound valid."""
    if c_lower_at_lambda <= 0:
        raise ValueError(
            f"The error bound needs a positive lower bound for c_lambda, got {c_lower_at_lambda}; "
            "bootstrap one first"
        )
    if lam <= 0 or delta < 0:
        raise ValueError(f"Invalid lambda={lam} or delta={delta}")
    return 16.0 * delta ** 2 / (math.pi ** 2 * c_lower_at_lambda * lam ** 2)


def choose_delta(eps_target: float, lambda_min: float, c_lb: float) -> float:
    """Largest δ keeping the per-λ error below eps_target for every λ ≥ lambda_min."""
    if eps_target <= 0 or lambda_min <= 0 or c_lb <= 0:
        raise ValueError("eps_target, lambda_min and c_lb must be positive")
    return math.pi * lambda_min * math.sqrt(c_lb * eps_target) / 4.0


def lambda_range(c_lb: float) -> Tuple[float, float]:
    """Interval outside of which c_λ ≤ min{2λ, 2/λ} < c_lb, so λ* lies inside."""
    if c_lb <= 0:
        raise ValueError(f"c_lb must be positive, got {c_lb}")
    if c_lb > 2.0:
        raise ValueError(f"c_lb={c_lb} exceeds the a-priori bound max min{{2l, 2/l}} = 2")
    return c_lb / 2.0, 2.0 / c_lb


def _secant_factor(ratio: float) -> float:
    return 0.5 * (ratio + 1.0 / ratio)


def lambda_grid_term(c_best: float, lambda_star_bracket: Tuple[float, float], lambda_step: float) -> float:
    """Slack between a grid value and the maximum of c_λ over the bracket around it.

    Lipschitz: Δλ/2. Secant: c_{λ*} ≤ c_λ·(λ*/λ + λ/λ*)/2 with λ the bracket
    midpoint and λ* anywhere in the bracket. The smaller of the two is returned.
    """
    if lambda_step <= 0:
        return 0.0
    lo, hi = lambda_star_bracket
    centre = 0.5 * (lo + hi)
    if lo <= 0 or centre <= 0:
        return 0.5 * lambda_step
    secant = c_best * (max(_secant_factor(lo / centre), _secant_factor(hi / centre)) - 1.0)
    return min(0.5 * lambda_step, secant)


def fine_precondition(wn: WeightNorms, c_lb: float) -> bool:
    """Whether the fine support bound applies: 4‖w‖₂²/c - 3 > 0."""
    return 4.0 * wn.l2_squared / c_lb - 3.0 > 0


def support_radius_bound(wn: WeightNorms, c_lb: float, mode: RadiusMode = 'coarse') -> float:
    """A-priori radius a of the support of extremizers.

    coarse: a ≤ 2‖w‖₁²/c². fine: the largest a with
    √a ≤ √2(‖w‖₁/c - √(a/2)·q), q = (4‖w‖₂²/c - 3)^{-1/2}, the unsquared form of
    a ≤ 2(‖w‖₁/c - √(a/2)·q)²; both sides are monotone so bisection applies.
    """
    if c_lb <= 0:
        raise ValueError(f"c_lb must be positive, got {c_lb}")
    coarse = 2.0 * wn.l1 ** 2 / c_lb ** 2
    if mode == 'coarse':
        return coarse
    if not fine_precondition(wn, c_lb):
        logfire.warning(f"Fine support bound needs 4||w||_2^2/c - 3 > 0 (c={c_lb}); using the coarse bound")
        return coarse

    q = (4.0 * wn.l2_squared / c_lb - 3.0) ** -0.5

    def excess(a: float) -> float:
        return math.sqrt(a) - math.sqrt(2.0) * (wn.l1 / c_lb - math.sqrt(a / 2.0) * q)

    if excess(coarse) <= 0:
        return coarse
    return optimize.brentq(excess, 0.0, coarse, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def bootstrap_lower_bound(weight: WeightSpec) -> float:
    """Cheap strictly positive lower bound: one full k-scan at λ = 1 on a coarse grid."""
    n = cell_count(BOOTSTRAP_DELTA, BOOTSTRAP_RADIUS)
    kernel = build_kernel(weight, BOOTSTRAP_DELTA, n)
    solution = solve_c_lambda_delta(
        kernel,
        MixedNormParams(BOOTSTRAP_LAMBDA, BOOTSTRAP_RADIUS),
        SpectralOptions(k_scan='full'),
    )
    value = witness_ratio(kernel, solution.extremizer)
    logfire.info(f"Bootstrap lower bound for {weight.kind}: {value:.10f}")
    return value


def plan_sweep(
    weight: WeightSpec,
    lambda_step: float,
    delta: Optional[float] = None,
    eps_target: Optional[float] = None,
    radius: Optional[float] = None,
    radius_mode: Literal['auto', 'coarse', 'fine'] = 'auto',
    c_lb_prior: float = 0.0,
    refine: bool = True,
    k_scan: Literal['pruned', 'full'] = 'pruned',
    chunk_size: int = 25,
) -> SweepConfig:
    """Size the λ range, radius and δ of a sweep from a lower bound on C_opt.

    A zero prior is replaced by :func:`bootstrap_lower_bound`.
    """
    if (delta is None) == (eps_target is None):
        raise ValueError("Give exactly one of delta and eps_target")

    c_lb = c_lb_prior if c_lb_prior > 0 else bootstrap_lower_bound(weight)
    lambda_lo, lambda_hi = lambda_range(c_lb)
    if delta is None:
        delta = choose_delta(eps_target, lambda_lo, c_lb)

    wn = weight_norms(weight)
    if radius is not None:
        used_mode, raw_radius = 'user', radius
    else:
        wanted = 'fine' if radius_mode == 'auto' else radius_mode
        used_mode = 'fine' if wanted == 'fine' and fine_precondition(wn, c_lb) else 'coarse'
        raw_radius = support_radius_bound(wn, c_lb, used_mode)

    config = SweepConfig(
        delta=delta,
        lambda_lo=lambda_lo,
        lambda_hi=lambda_hi,
        lambda_step=lambda_step,
        radius=grid_radius(raw_radius, delta),
        c_lb_prior=c_lb,
        radius_mode=used_mode,
        refine=refine,
        k_scan=k_scan,
        chunk_size=chunk_size,
    )
    logfire.info(
        f"Sweep plan for {weight.kind}: delta={config.delta:.6g}, radius={config.radius:.6g} ({used_mode}), "
        f"lambda in [{lambda_lo:.6g}, {lambda_hi:.6g}] step {lambda_step}, {config.cells} cells"
    )
    return config


def run_chunks_serial(
    kernel: DiscretizedKernel,
    chunks: List[np.ndarray],
    radius: float,
    opts: SpectralOptions,
) -> List[Dict[str, object]]:
    """Default chunk runner: every chunk in order, in this process."""
    rows: List[Dict[str, object]] = []
    for chunk in chunks:
        rows.extend(solution.summary() for solution in scan_lambda_chunk(kernel, chunk, radius, opts))
    return rows


def split_chunks(grid: np.ndarray, chunk_size: int) -> List[np.ndarray]:
    """Cut a λ grid into contiguous chunks.

    Args:
        grid: λ values in sweep order
        chunk_size: Points per chunk; the last chunk may be shorter

    Returns:
        Views of ``grid`` that together cover it in order
    """
    return [grid[i:i + chunk_size] for i in range(0, grid.size, chunk_size)]


def certify_points(
    rows: Sequence[Dict[str, object]],
    delta: float,
    lambda_step: float,
    sweep_pass: str,
) -> SweepPass:
    """Attach the discretization error and λ-grid slack to every solved grid point."""
    points = []
    for row in rows:
        lam = float(row["lambda"])
        c = float(row["c_lambda_delta"])
        error = discretization_error_bound(c, lam, delta)
        slack = lambda_grid_term(c + error, (lam - lambda_step / 2.0, lam + lambda_step / 2.0), lambda_step)
        points.append(LambdaPoint(
            sweep_pass=sweep_pass,
            lam=lam,
            c_lambda_delta=c,
            support_cells=int(row["support_cells"]),
            feasible=bool(row["feasible"]),
            iterations=int(row["iterations"]),
            residual=float(row["residual"]),
            converged=bool(row["converged"]),
            degenerate=bool(row["degenerate"]),
            discretization_error=error,
            lambda_grid_slack=slack,
            second_mu=None if row.get("second_mu") is None else float(row["second_mu"]),
            blocks=tuple(BlockDiagnostic(**block) for block in row.get("blocks", ())),
        ))
    return SweepPass(name=sweep_pass, lambda_step=lambda_step, points=tuple(points))


def _refinement_grid(lambda_star: float, lambda_step: float) -> np.ndarray:
    fine_step = lambda_step / REFINEMENT_FACTOR
    offsets = np.arange(-REFINEMENT_FACTOR, REFINEMENT_FACTOR + 1) * fine_step
    grid = lambda_star + offsets
    return grid[grid > 0]


def sweep(
    weight: WeightSpec,
    cfg: SweepConfig,
    runner: Optional[ChunkRunner] = None,
    kernel: Optional[DiscretizedKernel] = None,
) -> BoundsReport:
    """Solve c_{λ,δ} on the λ grid and assemble certified bounds.

    Args:
        weight: Weight w
        cfg: Sweep grid
        runner: Solves λ chunks and returns summary rows in grid order
            (serial by default; the CLI passes a parallel, cache-aware one)
        kernel: Prebuilt kernel with at least cfg.cells lags

    Returns:
        BoundsReport with both sweep passes, error terms and the extremizer at λ*
    """
    runner = runner or run_chunks_serial
    opts = cfg.spectral_options()
    n = cfg.cells
    if kernel is None:
        kernel = build_kernel(weight, cfg.delta, n)

    c_lb = cfg.c_lb_prior if cfg.c_lb_prior > 0 else bootstrap_lower_bound(weight)
    needed_lo, needed_hi = lambda_range(c_lb)
    grid = cfg.lambda_grid()
    covered = grid[0] - cfg.lambda_step / 2.0 <= needed_lo and grid[-1] + cfg.lambda_step / 2.0 >= needed_hi
    if not covered:
        logfire.warning(
            f"Lambda grid [{grid[0]}, {grid[-1]}] does not cover [{needed_lo}, {needed_hi}]; "
            "the upper bound only holds if the maximizing lambda lies on the grid"
        )

    with logfire.span('lambda sweep', weight=weight.kind, points=int(grid.size), cells=n):
        coarse = certify_points(
            runner(kernel, split_chunks(grid, cfg.chunk_size), cfg.radius, opts),
            cfg.delta, cfg.lambda_step, 'coarse',
        )
    passes = [coarse]
    lower = coarse.lower
    lambda_star = coarse.best.lam
    k_star = coarse.best.support_cells
    certificate = list(coarse.points)

    if cfg.refine:
        fine_grid = _refinement_grid(lambda_star, cfg.lambda_step)
        with logfire.span('lambda refinement', centre=lambda_star, points=int(fine_grid.size)):
            fine = certify_points(
                runner(kernel, [fine_grid], cfg.radius, opts),
                cfg.delta, cfg.lambda_step / REFINEMENT_FACTOR, 'refine',
            )
        passes.append(fine)
        # refined points cover the coarse cell around λ*, so that one cell may be swapped out
        swapped = [p for p in coarse.points if p.lam != lambda_star] + list(fine.points)
        if max(p.upper_contribution for p in swapped) < coarse.upper:
            certificate = swapped
        if fine.lower > lower:
            lower = fine.lower
            lambda_star = fine.best.lam
            k_star = fine.best.support_cells

    decisive = max(certificate, key=lambda p: p.upper_contribution)
    upper = decisive.upper_contribution
    if upper < lower:
        raise AcboundsError(
            f"Upper bound {upper} is below the lower bound {lower}; the per-lambda rows are inconsistent"
        )

    final = solve_c_lambda_delta(kernel, MixedNormParams(lambda_star, cfg.radius), opts, k_start=k_star)
    extremizer = final.extremizer
    fn = norms(extremizer)
    ratio = witness_ratio(kernel, extremizer)
    infeasible = sum(1 for sweep_pass in passes for p in sweep_pass.points if not p.feasible)
    if infeasible:
        logfire.warning(f"{infeasible} lambda points had no feasible support and used clipped vectors")

    report = BoundsReport(
        lower=lower,
        upper=upper,
        lambda_star=lambda_star,
        delta=cfg.delta,
        lambda_step=cfg.lambda_step,
        radius=cfg.radius,
        radius_mode=cfg.radius_mode,
        cells=n,
        weight=weight.describe(),
        c_lb_prior=c_lb,
        passes=tuple(passes),
        error_terms=ErrorTerms(
            discretization=decisive.discretization_error,
            lambda_grid=decisive.lambda_grid_slack,
        ),
        extremizer=extremizer,
        witness_ratio=ratio,
        norm_ratio=fn.l1 / fn.l2,
        range_covered=bool(covered),
        infeasible_points=infeasible,
    )
    logfire.info(
        f"Bounds for {weight.kind}: [{report.lower:.10f}, {report.upper:.10f}], gap {report.gap:.3e}, "
        f"lambda*={report.lambda_star:.6g}, ||f||_1/||f||_2={report.norm_ratio:.6g}"
    )
    return report
