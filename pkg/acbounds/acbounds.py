"""Core run logic: weight loading, the parallel λ sweep, fixed-point runs and artifacts."""

import asyncio
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from acbounds.cache import CacheManager, lambda_key, setup_cache_handling
from acbounds.certify import BoundsReport, SweepConfig, plan_sweep, sweep
from acbounds.config.read_config import CANONICAL_GAUSSIAN_EXPONENT, RunConfig, build_run_config
from acbounds.exceptions import AcboundsError, FixedPointCollapseError
from acbounds.fixedpoint import FixedPointResult, default_initial_guess, fixed_point_iterate, fixed_point_restarts, restart_guesses
from acbounds.output import (
    TABLE1_FILE,
    fixed_point_document,
    write_fixed_point,
    write_json,
    write_kernel,
    write_manifest,
    write_report,
    write_tsv,
    KERNEL_FILE,
    REPORT_FILE,
)
from acbounds.spectral import SpectralOptions, scan_lambda_chunk
from acbounds.utils.get_hash import get_hash
from acbounds.weight import DiscretizedKernel, WeightSpec, build_kernel, gaussian_means_constant, load_tabulated_weight
import logfire

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FIXED_POINT_NOT_CONVERGED = 2
EXIT_INFEASIBLE = 3

# lower, upper, fixed point
TABLE1_REFERENCE: Dict[str, Tuple[float, float, float]] = {
    "box": (0.8055809, 0.8055896, 0.8055809),
    "gaussian": (0.7152474, 0.7152576, 0.7152475),
}

ProgressCallback = Callable[[int, int], None]


@dataclass
class ChunkResult:
    """Summary rows of one λ chunk, or the error that stopped it."""
    index: int
    rows: Optional[List[Dict[str, Any]]]
    error: Optional[str] = None


@dataclass
class RunOutcome:
    exit_code: int
    out_dir: Path
    report: Optional[BoundsReport] = None
    fixed_point: Optional[FixedPointResult] = None
    artifacts: List[Path] = field(default_factory=list)
    process_id: Optional[str] = None


def load_weight(cfg: RunConfig) -> WeightSpec:
    """Weight named by the configuration.

    Args:
        cfg: Run configuration; ``weight_file`` is read for tabulated weights

    Returns:
        WeightSpec for box, Gaussian or the loaded samples

    Raises:
        FileNotFoundError: If the weight file does not exist
        WeightError: If the loaded samples are not a valid weight
    """
    if cfg.weight == 'box':
        return WeightSpec.box()
    if cfg.weight == 'gaussian':
        return WeightSpec.gaussian()
    return load_tabulated_weight(cfg.weight_file)


def chunk_id(lambdas: Sequence[float]) -> str:
    """Identity of a chunk: its results only depend on its own λ values."""
    return get_hash({"lambdas": [repr(float(lam)) for lam in lambdas]})[:16]


def solve_chunk(
    kernel: DiscretizedKernel,
    lambdas: np.ndarray,
    radius: float,
    opts: SpectralOptions,
) -> List[Dict[str, Any]]:
    """Worker entry point; returns plain rows so nothing heavy crosses the process boundary."""
    return [solution.summary() for solution in scan_lambda_chunk(kernel, lambdas, radius, opts)]


class ParallelChunkRunner:
    """Chunk runner for :func:`acbounds.certify.sweep` backed by a process pool.

    Chunks are dispatched concurrently with at most ``workers`` in flight;
    chunks whose rows are all in the cache are not recomputed, and freshly
    solved chunks are written back from this process.
    """

    def __init__(
        self,
        workers: int = 1,
        cache_manager: Optional[CacheManager] = None,
        process_id: Optional[str] = None,
        cached_results: Optional[Dict[str, Dict[str, Any]]] = None,
        progress_callback: Optional[ProgressCallback] = None,
    ) -> None:
        self.workers = max(1, workers)
        self.cache_manager = cache_manager
        self.process_id = process_id
        self.cached_results = dict(cached_results or {})
        self.progress_callback = progress_callback
        self.solved = 0
        self.total = 0

    def _from_cache(self, lambdas: np.ndarray) -> Optional[List[Dict[str, Any]]]:
        key = chunk_id(lambdas)
        rows = [self.cached_results.get(lambda_key(key, lam)) for lam in lambdas]
        return rows if all(row is not None for row in rows) else None

    def _record(self, lambdas: np.ndarray, rows: List[Dict[str, Any]]) -> None:
        if self.cache_manager and self.process_id:
            key = chunk_id(lambdas)
            self.cache_manager.cache_results(self.process_id, key, rows)
            self.cached_results.update({lambda_key(key, row["lambda"]): row for row in rows})
        self.solved += len(rows)
        if self.progress_callback:
            self.progress_callback(self.solved, self.total)

    async def _run(
        self,
        kernel: DiscretizedKernel,
        chunks: List[np.ndarray],
        radius: float,
        opts: SpectralOptions,
    ) -> List[Dict[str, Any]]:
        self.total += sum(chunk.size for chunk in chunks)
        semaphore = asyncio.Semaphore(self.workers)
        loop = asyncio.get_running_loop()
        executor: Optional[Executor] = ProcessPoolExecutor(max_workers=self.workers) if self.workers > 1 else None

        async def process_with_limit(index: int, lambdas: np.ndarray) -> ChunkResult:
            if (rows := self._from_cache(lambdas)) is not None:
                self._record_progress_only(len(rows))
                return ChunkResult(index=index, rows=rows)
            async with semaphore:
                try:
                    if executor is None:
                        rows = solve_chunk(kernel, lambdas, radius, opts)
                    else:
                        rows = await loop.run_in_executor(executor, solve_chunk, kernel, lambdas, radius, opts)
                except Exception as e:
                    logfire.error(f"Error solving lambda chunk {index}: {e}", chunk=index, error=str(e))
                    return ChunkResult(index=index, rows=None, error=str(e))
            self._record(lambdas, rows)
            return ChunkResult(index=index, rows=rows)

        try:
            results = await asyncio.gather(*(process_with_limit(i, chunk) for i, chunk in enumerate(chunks)))
        finally:
            if executor is not None:
                executor.shutdown()

        failed = [result for result in results if result.error]
        if failed:
            raise AcboundsError(
                f"{len(failed)} of {len(results)} lambda chunks failed; first error: {failed[0].error}"
            )
        return [row for result in sorted(results, key=lambda r: r.index) for row in result.rows]

    def _record_progress_only(self, count: int) -> None:
        self.solved += count
        if self.progress_callback:
            self.progress_callback(self.solved, self.total)

    def __call__(
        self,
        kernel: DiscretizedKernel,
        chunks: List[np.ndarray],
        radius: float,
        opts: SpectralOptions,
    ) -> List[Dict[str, Any]]:
        return asyncio.run(self._run(kernel, chunks, radius, opts))


def sweep_identity(weight: WeightSpec, plan: SweepConfig) -> Dict[str, Any]:
    """Everything the per-λ rows depend on; its hash keys the cache."""
    return {
        "weight": weight.describe(),
        "samples_x": list(weight.samples_x),
        "samples_w": list(weight.samples_w),
        "sweep": plan.model_dump(mode='json'),
    }


def plan_from_config(cfg: RunConfig, weight: WeightSpec) -> SweepConfig:
    """Sweep plan from the run configuration, see :func:`acbounds.certify.plan_sweep`.

    Args:
        cfg: Run configuration with the mode presets already applied
        weight: Weight being bounded

    Returns:
        SweepConfig with δ, radius and λ range sized from the prior lower bound
    """
    return plan_sweep(
        weight,
        lambda_step=cfg.lambda_step,
        delta=cfg.delta,
        eps_target=cfg.eps_target,
        radius=cfg.radius,
        radius_mode=cfg.radius_mode,
        c_lb_prior=cfg.c_lb_prior,
        refine=cfg.refine,
        k_scan=cfg.k_scan,
        chunk_size=cfg.chunk_size,
    )


def _rescaled_bounds(cfg: RunConfig, lower: float, upper: Optional[float]) -> Optional[Dict[str, Any]]:
    """Bounds for (a/π)^{1/2} exp(-a x²) when a non-canonical exponent was asked for."""
    if cfg.weight != 'gaussian' or cfg.gaussian_exponent == CANONICAL_GAUSSIAN_EXPONENT:
        return None
    rescaled: Dict[str, Any] = {
        "gaussian_exponent": cfg.gaussian_exponent,
        "lower": gaussian_means_constant(cfg.gaussian_exponent, lower),
    }
    if upper is not None:
        rescaled["upper"] = gaussian_means_constant(cfg.gaussian_exponent, upper)
    return {"rescaled": rescaled}


def run_fixed_point(cfg: RunConfig, kernel: DiscretizedKernel, delta: float, radius: float) -> FixedPointResult:
    """Iterate from the default guess, or keep the best of ``fp_restarts`` starts."""
    if cfg.fp_restarts == 1:
        return fixed_point_iterate(
            kernel, default_initial_guess(delta, radius), cfg.fp_tol, cfg.fp_max_iter, cfg.fp_relaxation
        )
    results = fixed_point_restarts(
        kernel, restart_guesses(delta, radius, cfg.fp_restarts), cfg.fp_tol, cfg.fp_max_iter, cfg.fp_relaxation
    )
    if not results:
        raise FixedPointCollapseError(f"All {cfg.fp_restarts} fixed-point starts collapsed")
    return results[0]


def run_solve(
    cfg: RunConfig,
    cache_enabled: bool = True,
    process_id: Optional[str] = None,
    auto_resume: bool = True,
    progress_callback: Optional[ProgressCallback] = None,
    cache_dir: Optional[Path] = None,
    command: str = 'solve',
) -> RunOutcome:
    """Run the spectral sweep and/or the fixed-point iteration and write every artifact.

    Args:
        cfg: Run configuration
        cache_enabled: Store solved λ points so the sweep can be resumed
        process_id: Cached sweep to resume
        auto_resume: Offer to resume the latest unfinished sweep with the same configuration
        progress_callback: Called with (solved, total) λ points
        cache_dir: Cache location override
        command: Name recorded in the manifest

    Returns:
        RunOutcome with exit code 0, 2 (fixed point not converged) or 3 (spectral
        λ points without a feasible support; takes precedence over 2)
    """
    weight = load_weight(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with logfire.span('solve', weight=weight.kind, method=cfg.method, mode=cfg.mode):
        plan = plan_from_config(cfg, weight)
        kernel = build_kernel(weight, plan.delta, plan.cells)

        report = None
        if cfg.method in ('spectral', 'both'):
            grid_points = int(plan.lambda_grid().size)
            process_id, cache_manager, cached_results = setup_cache_handling(
                sweep_identity=sweep_identity(weight, plan),
                cache_enabled=cache_enabled,
                process_id=process_id,
                auto_resume=auto_resume,
                total_points=grid_points,
                cache_dir=cache_dir,
            )
            runner = ParallelChunkRunner(
                workers=cfg.workers,
                cache_manager=cache_manager,
                process_id=process_id,
                cached_results=cached_results,
                progress_callback=progress_callback,
            )
            report = sweep(weight, plan, runner=runner, kernel=kernel)
            if cache_manager and process_id:
                cache_manager.mark_process_completed(process_id)
                logfire.info(f"Marked process {process_id} as completed")

        fixed_point = None
        if cfg.method in ('fixedpoint', 'both'):
            with logfire.span('fixed point', weight=weight.kind, restarts=cfg.fp_restarts):
                fixed_point = run_fixed_point(cfg, kernel, plan.delta, plan.radius)
            if report is not None and fixed_point.value > report.upper:
                logfire.warning(
                    f"Fixed-point value {fixed_point.value} exceeds the certified upper bound {report.upper}"
                )

    artifacts: List[Path] = []
    if report is not None:
        lower = report.lower if fixed_point is None else max(report.lower, fixed_point.value)
        artifacts += write_report(report, out_dir, fixed_point, extras=_rescaled_bounds(cfg, lower, report.upper))
    else:
        document: Dict[str, Any] = {
            "method": "fixedpoint",
            "weight": weight.describe(),
            "delta": plan.delta,
            "radius": plan.radius,
            "cells": plan.cells,
            "fixed_point": fixed_point_document(fixed_point),
        }
        document.update(_rescaled_bounds(cfg, fixed_point.value, None) or {})
        artifacts.append(write_json(document, out_dir / REPORT_FILE))
        artifacts += write_fixed_point(fixed_point, out_dir)

    config = cfg.identity()
    artifacts.append(write_manifest(out_dir, artifacts, config, command))

    exit_code = EXIT_OK
    if fixed_point is not None and not fixed_point.converged:
        exit_code = EXIT_FIXED_POINT_NOT_CONVERGED
    if report is not None and report.infeasible_points:
        exit_code = EXIT_INFEASIBLE
    return RunOutcome(
        exit_code=exit_code,
        out_dir=out_dir,
        report=report,
        fixed_point=fixed_point,
        artifacts=artifacts,
        process_id=process_id,
    )


def run_kernel_dump(cfg: RunConfig, lags: Optional[int] = None) -> RunOutcome:
    """Write w̃(kδ) for the configured weight; ``lags`` defaults to the cell count of the planned grid."""
    weight = load_weight(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    delta = cfg.delta
    if lags is None or delta is None:
        plan = plan_from_config(cfg, weight)
        delta = plan.delta
        lags = lags or plan.cells
    kernel = build_kernel(weight, delta, lags)
    artifacts = [write_kernel(kernel, out_dir / KERNEL_FILE)]
    artifacts.append(write_manifest(out_dir, artifacts, {**cfg.identity(), "lags": lags}, 'kernel-dump'))
    return RunOutcome(exit_code=EXIT_OK, out_dir=out_dir, artifacts=artifacts)


def table1_rows(outcomes: Dict[str, RunOutcome]) -> pd.DataFrame:
    """Spectral lower/upper, their difference and the fixed-point value per weight, with deviations."""
    rows = []
    for name, outcome in outcomes.items():
        report, fixed_point = outcome.report, outcome.fixed_point
        ref_lower, ref_upper, ref_fixed = TABLE1_REFERENCE[name]
        rows.append({
            "weight": name,
            "lower": report.lower,
            "upper": report.upper,
            "difference": report.gap,
            "fixed_point": fixed_point.value,
            "lower_deviation": abs(report.lower - ref_lower),
            "upper_deviation": abs(report.upper - ref_upper),
            "fixed_point_deviation": abs(fixed_point.value - ref_fixed),
        })
    return pd.DataFrame(rows)


def run_reproduce_table1(
    out: Path,
    mode: str = 'paper',
    workers: Optional[int] = None,
    cache_enabled: bool = True,
    auto_resume: bool = True,
    progress_callback: Optional[ProgressCallback] = None,
    cache_dir: Optional[Path] = None,
) -> Tuple[pd.DataFrame, int]:
    """Both weights with both methods, one sub-directory each, and the comparison table.

    Returns:
        The comparison table and the worst exit code of the two runs
    """
    out = Path(out)
    outcomes: Dict[str, RunOutcome] = {}
    for name in TABLE1_REFERENCE:
        overrides = {"weight": name, "mode": mode, "method": "both", "out": out / name, "workers": workers}
        cfg = build_run_config(overrides=overrides)
        outcomes[name] = run_solve(
            cfg,
            cache_enabled=cache_enabled,
            auto_resume=auto_resume,
            progress_callback=progress_callback,
            cache_dir=cache_dir,
            command='reproduce-table1',
        )

    table = table1_rows(outcomes)
    artifacts = [write_tsv(table, out / TABLE1_FILE)]
    for outcome in outcomes.values():
        artifacts += outcome.artifacts
    write_manifest(out, artifacts, {"mode": mode, "weights": list(outcomes)}, 'reproduce-table1')
    logfire.info(f"Comparison with the reference values:\n{table.to_string(index=False)}")
    return table, max(outcome.exit_code for outcome in outcomes.values())
