"""Discretized relaxed problem c_{λ,δ} via the support-size loop and the power method.

For a block of k cells the unconstrained problem is the top eigenpair of
M_λ = 2·A_λ⁻¹ K_w A_λ⁻¹, where the rank-one part of A_λ uses the block's own
radius kδ/2. Blocks whose eigenvector is nonnegative and symmetric decreasing
are feasible; c_{λ,δ} is the best feasible Rayleigh quotient.
"""

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from acbounds.exceptions import NoFeasibleSupportError
from acbounds.stepspace import (
    MixedNormParams,
    StepFunction,
    ToeplitzOperator,
    apply_a_inv_array,
    cell_count,
    convolution_operator,
    embed,
)
from acbounds.weight import DiscretizedKernel

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

KScan = Literal['pruned', 'full']


@dataclass(frozen=True)
class SpectralOptions:
    """Power-method and k-loop settings."""
    tol: float = 1e-12
    max_iter_factor: int = 50
    feasibility_tol: float = 1e-8
    k_scan: KScan = 'pruned'
    patience: int = 10
    degenerate_gap: float = 1e-13


@dataclass(frozen=True)
class EigenPair:
    """Top eigenpair of M_λ on one block, eigenvector in un-whitened coordinates."""
    mu: float
    vector: StepFunction
    iterations: int
    residual: float
    converged: bool
    degenerate: bool = False
    second_mu: Optional[float] = None


@dataclass(frozen=True)
class BlockDiagnostic:
    """Top eigenvalue of one scanned block and whether its eigenvector passed the feasibility check."""
    k: int
    mu: float
    feasible: bool
    iterations: int
    converged: bool

    def row(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(frozen=True)
class SpectralSolution:
    """c_{λ,δ} with its feasible extremizer and the winning support size."""
    lam: float
    delta: float
    c_lambda_delta: float
    extremizer: StepFunction = field(repr=False)
    support_cells: int
    feasible: bool
    iterations: int
    residual: float
    converged: bool = True
    degenerate: bool = False
    second_mu: Optional[float] = None
    diagnostics: Tuple[BlockDiagnostic, ...] = field(default=(), repr=False)

    def summary(self) -> Dict[str, object]:
        """Row for the per-λ table and the cache; ``blocks`` holds one entry per scanned block."""
        return {
            "lambda": self.lam,
            "c_lambda_delta": self.c_lambda_delta,
            "support_cells": self.support_cells,
            "feasible": self.feasible,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "second_mu": self.second_mu,
            "blocks": [diagnostic.row() for diagnostic in self.diagnostics],
        }


class OperatorCache:
    """Convolution blocks keyed by size, shared across the λ values of one chunk."""

    def __init__(self, kernel: DiscretizedKernel):
        self.kernel = kernel
        self._operators: Dict[int, ToeplitzOperator] = {}

    def get(self, size: int) -> ToeplitzOperator:
        if size not in self._operators:
            self._operators[size] = convolution_operator(self.kernel, size)
        return self._operators[size]


def _triangular_bump(k: int) -> np.ndarray:
    bump = np.minimum(np.arange(1, k + 1), np.arange(k, 0, -1)).astype(float)
    return bump / np.linalg.norm(bump)


def top_eigenpair(
    kernel: DiscretizedKernel,
    p: MixedNormParams,
    support_cells: int,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    operator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    cache: Optional[OperatorCache] = None,
    degenerate_gap: float = 1e-13,
) -> EigenPair:
    """Power method for the dominant eigenpair of M_λ on a central block.

    Args:
        kernel: Discretized kernel w̃
        p: Mixed-norm parameters; only λ is used, the block radius is kδ/2
        support_cells: Block size k
        tol: Bound on the eigen-residual ‖Mg - μg‖₂ for unit g
        max_iter: Iteration cap, 50·k by default
        operator: Replaces the action of M_λ (tests inject small matrices here)
        cache: Reuse convolution blocks across calls

    Returns:
        EigenPair whose vector f = A_λ⁻¹g is normalized to ‖f‖_{H_λ} = 1 with Σf ≥ 0
    """
    k = support_cells
    delta = kernel.delta
    if k < 1:
        raise ValueError(f"support_cells must be at least 1, got {k}")
    block = MixedNormParams(p.lam, k * delta / 2.0)
    max_iter = max(1, max_iter if max_iter is not None else 50 * k)

    if operator is None:
        conv = cache.get(k) if cache is not None else convolution_operator(kernel, k)

        def operator(g: np.ndarray) -> np.ndarray:
            x = apply_a_inv_array(g, block.lam, block.inverse_shift, delta)
            return 2.0 * apply_a_inv_array(conv.matvec(x), block.lam, block.inverse_shift, delta)

    g = _triangular_bump(k)
    mu = previous_mu = math.nan
    residual = math.inf
    converged = False
    iterations = 0
    mg = operator(g)
    while True:
        iterations += 1
        previous_mu = mu
        mu = float(np.dot(g, mg))
        residual = float(np.linalg.norm(mg - mu * g))
        if residual <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        g = mg / np.linalg.norm(mg)
        mg = operator(g)

    degenerate = False
    second_mu = None
    if not converged:
        # a stalled Rayleigh quotient with a large residual points at two nearly equal eigenvalues
        if math.isfinite(previous_mu) and abs(mu - previous_mu) <= degenerate_gap * max(1.0, abs(mu)):
            degenerate = True
            direction = mg - mu * g
            direction /= np.linalg.norm(direction)
            second_mu = float(np.dot(direction, operator(direction)))
        logger.debug(f"Power method stopped at k={k}, lambda={p.lam} after {iterations} iterations, residual {residual:.3e}")

    f = apply_a_inv_array(g, block.lam, block.inverse_shift, delta)
    if f.sum() < 0:
        f = -f
    h_norm_sq = block.lam * delta * float(np.dot(f, f)) + (delta * float(f.sum())) ** 2 / block.lam
    f = f / math.sqrt(h_norm_sq)

    return EigenPair(
        mu=mu,
        vector=StepFunction(delta, block.radius, f),
        iterations=iterations,
        residual=residual,
        converged=converged,
        degenerate=degenerate,
        second_mu=second_mu,
    )


def feasibility_check(v, tol: float = 1e-8) -> bool:
    """Nonnegative, symmetric and non-increasing away from the centre, relative to max(v)."""
    values = np.asarray(v.values if isinstance(v, StepFunction) else v, dtype=float)
    if values.size == 0:
        return False
    peak = float(values.max())
    if peak <= 0:
        return False
    slack = tol * peak
    if float(values.min()) < -slack:
        return False
    if float(np.max(np.abs(values - values[::-1]))) > slack:
        return False
    rising = values[:(values.size + 1) // 2]
    return bool(np.all(np.diff(rising) >= -slack))


def _rayleigh(conv: ToeplitzOperator, lam: float, delta: float, values: np.ndarray) -> float:
    """2Q(f,f)/‖f‖²_{H_λ} for block values f."""
    quad = delta * float(np.dot(values, conv.matvec(values)))
    h_norm_sq = lam * delta * float(np.dot(values, values)) + (delta * float(values.sum())) ** 2 / lam
    if h_norm_sq == 0:
        return 0.0
    return 2.0 * quad / h_norm_sq


@dataclass
class _BlockResult:
    k: int
    pair: EigenPair
    feasible: bool
    clipped: np.ndarray
    value: float


def _solve_block(
    kernel: DiscretizedKernel,
    p: MixedNormParams,
    k: int,
    opts: SpectralOptions,
    cache: OperatorCache,
) -> _BlockResult:
    pair = top_eigenpair(
        kernel, p, k,
        tol=opts.tol,
        max_iter=opts.max_iter_factor * k,
        cache=cache,
        degenerate_gap=opts.degenerate_gap,
    )
    values = pair.vector.values
    feasible = feasibility_check(values, opts.feasibility_tol)
    # clipping keeps the vector nonnegative, so its quotient stays a valid lower bound
    clipped = np.maximum(values, 0.0)
    value = _rayleigh(cache.get(k), p.lam, kernel.delta, clipped) if clipped.any() else 0.0
    return _BlockResult(k=k, pair=pair, feasible=feasible, clipped=clipped, value=value)


def _scan_order(n: int, k_start: Optional[int]) -> Tuple[List[int], List[int]]:
    if k_start is None:
        return list(range(1, n + 1)), []
    k_start = min(max(k_start, 1), n)
    return list(range(k_start, n + 1)), list(range(k_start - 1, 0, -1))


def solve_c_lambda_delta(
    kernel: DiscretizedKernel,
    p: MixedNormParams,
    opts: Optional[SpectralOptions] = None,
    k_start: Optional[int] = None,
    cache: Optional[OperatorCache] = None,
) -> SpectralSolution:
    """Solve the relaxed problem at one λ on the grid of radius p.radius.

    Args:
        kernel: Discretized kernel with at least N lags
        p: λ and the domain radius a
        opts: Spectral options; ``k_scan='full'`` scans every block size
        k_start: Warm start for the pruned scan (ignored in full mode)
        cache: Shared convolution blocks

    Returns:
        SpectralSolution for the best feasible block, or for the best clipped
        block flagged infeasible when no block passes the feasibility check

    Raises:
        NoFeasibleSupportError: If every scanned block clips to zero
    """
    opts = opts or SpectralOptions()
    cache = cache or OperatorCache(kernel)
    n = cell_count(kernel.delta, p.radius)
    if kernel.n < n:
        raise ValueError(f"Kernel has {kernel.n} lags but the grid has {n} cells")

    start = None if opts.k_scan == 'full' else k_start
    upward, downward = _scan_order(n, start)
    results: Dict[int, _BlockResult] = {}
    best_feasible: Optional[_BlockResult] = None

    for direction in (upward, downward):
        stale = 0
        for k in direction:
            result = _solve_block(kernel, p, k, opts, cache)
            results[k] = result
            if result.feasible and (best_feasible is None or result.value > best_feasible.value):
                best_feasible = result
                stale = 0
            else:
                stale += 1
            if start is not None and stale >= opts.patience:
                break

    diagnostics = tuple(
        BlockDiagnostic(k=r.k, mu=r.pair.mu, feasible=r.feasible, iterations=r.pair.iterations, converged=r.pair.converged)
        for r in sorted(results.values(), key=lambda r: r.k)
    )

    winner = best_feasible
    if winner is None:
        candidates = [r for r in results.values() if r.value > 0]
        if not candidates:
            best = max(results.values(), key=lambda r: r.pair.mu)
            raise NoFeasibleSupportError(f"No usable support size at lambda={p.lam}", best_candidate=best.pair)
        winner = max(candidates, key=lambda r: r.value)
        logfire.warning(f"No feasible support at lambda={p.lam}; using clipped block k={winner.k}")

    if winner.pair.degenerate:
        logfire.warning(
            f"Near-degenerate top eigenvalue at lambda={p.lam}, k={winner.k}: "
            f"{winner.pair.mu} vs {winner.pair.second_mu}; refine the lambda grid here"
        )

    return SpectralSolution(
        lam=p.lam,
        delta=kernel.delta,
        c_lambda_delta=winner.value,
        extremizer=embed(winner.clipped, kernel.delta, p.radius),
        support_cells=winner.k,
        feasible=winner.feasible,
        iterations=winner.pair.iterations,
        residual=winner.pair.residual,
        converged=winner.pair.converged,
        degenerate=winner.pair.degenerate,
        second_mu=winner.pair.second_mu,
        diagnostics=diagnostics,
    )


def scan_lambda_chunk(
    kernel: DiscretizedKernel,
    lambdas: Sequence[float],
    radius: float,
    opts: Optional[SpectralOptions] = None,
) -> List[SpectralSolution]:
    """Solve a contiguous run of λ values, warm-starting each k-scan from the previous optimum.

    The first λ of the chunk always runs a full scan, so the result does not
    depend on how the λ grid was split between workers.
    """
    opts = opts or SpectralOptions()
    cache = OperatorCache(kernel)
    solutions: List[SpectralSolution] = []
    k_start: Optional[int] = None
    for lam in lambdas:
        solution = solve_c_lambda_delta(kernel, MixedNormParams(float(lam), radius), opts, k_start=k_start, cache=cache)
        solutions.append(solution)
        k_start = solution.support_cells
    return solutions
