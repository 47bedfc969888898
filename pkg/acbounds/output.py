"""Report, table and manifest writers.

Every real number is written with 17 significant digits and every mapping in
a fixed key order, so identical runs produce byte-identical files.
"""

import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from acbounds.certify import BoundsReport
from acbounds.fixedpoint import FixedPointResult
from acbounds.stepspace import StepFunction, extremizer_rows
from acbounds.utils.get_hash import get_hash
from acbounds.weight import DiscretizedKernel, kernel_table

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'

REPORT_FILE = 'report.json'
LAMBDA_TABLE_FILE = 'lambda_table.tsv'
BLOCK_DIAGNOSTICS_FILE = 'block_diagnostics.tsv'
EXTREMIZER_FILE = 'extremizer.tsv'
FIXED_POINT_EXTREMIZER_FILE = 'fixed_point_extremizer.tsv'
TRACE_FILE = 'fixed_point_trace.tsv'
KERNEL_FILE = 'kernel.tsv'
TABLE1_FILE = 'table1.tsv'
MANIFEST_FILE = 'manifest.json'

BLOCK_COLUMNS = ['pass', 'lambda', 'k', 'mu', 'feasible', 'iterations', 'converged']


def format_real(value: float) -> str:
    return format(float(value), '.17g')


def render_json(obj: Any, indent: int = 2, level: int = 0) -> str:
    """JSON text with reals at 17 significant digits; NaN and infinities become null."""
    pad = ' ' * (indent * (level + 1))
    closing = ' ' * (indent * level)
    if isinstance(obj, Mapping):
        if not obj:
            return '{}'
        items = [f'{pad}{_render_string(str(key))}: {render_json(value, indent, level + 1)}' for key, value in obj.items()]
        return '{\n' + ',\n'.join(items) + '\n' + closing + '}'
    if isinstance(obj, (list, tuple)):
        if not obj:
            return '[]'
        items = [f'{pad}{render_json(value, indent, level + 1)}' for value in obj]
        return '[\n' + ',\n'.join(items) + '\n' + closing + ']'
    if isinstance(obj, (bool, np.bool_)):
        return 'true' if obj else 'false'
    if obj is None:
        return 'null'
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_real(obj) if math.isfinite(obj) else 'null'
    return _render_string(str(obj))


def _render_string(text: str) -> str:
    escaped = text.replace('\\', '\\\\').replace('"', '\\"').replace('\n', '\\n').replace('\t', '\\t')
    return f'"{escaped}"'


def write_json(data: Mapping[str, Any], path: Path) -> Path:
    """Write a mapping as JSON through :func:`render_json`.

    Args:
        data: Mapping to write, keys in the order they should appear
        path: Destination file, overwritten

    Returns:
        The path written
    """
    path.write_text(render_json(data) + '\n', encoding='utf-8')
    return path


def write_tsv(frame: pd.DataFrame, path: Path) -> Path:
    """Write a frame as tab-separated text with a header and no index.

    Args:
        frame: Table to write; float columns get 17 significant digits
        path: Destination file, overwritten

    Returns:
        The path written
    """
    frame.to_csv(path, sep='\t', index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def lambda_table(report: BoundsReport) -> pd.DataFrame:
    """One row per solved λ of every pass, in sweep order.

    Args:
        report: Certified sweep

    Returns:
        Frame with the columns of :meth:`acbounds.certify.LambdaPoint.row`
    """
    return pd.DataFrame([point.row() for point in report.per_lambda])


def block_diagnostics_table(report: BoundsReport) -> pd.DataFrame:
    """(k, mu_k, feasible, iterations) of every block scanned at every λ."""
    rows = [row for point in report.per_lambda for row in point.block_rows()]
    return pd.DataFrame(rows, columns=BLOCK_COLUMNS)


def export_extremizer_plot_data(extremizer: Union[BoundsReport, StepFunction], path: Path) -> Path:
    """(x, f(x)) rows normalized to ‖f‖₁‖f‖₂ = 1, zero outside the support."""
    f = extremizer.extremizer if isinstance(extremizer, BoundsReport) else extremizer
    return write_tsv(pd.DataFrame(extremizer_rows(f)), path)


def write_trace(result: FixedPointResult, path: Path) -> Path:
    frame = pd.DataFrame(list(result.trace), columns=['iteration', 'value', 'sup_change'])
    return write_tsv(frame, path)


def write_kernel(kernel: DiscretizedKernel, path: Path) -> Path:
    return write_tsv(kernel_table(kernel), path)


def report_document(
    report: BoundsReport,
    fixed_point: Optional[FixedPointResult] = None,
    extras: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Structured form of a BoundsReport with artifact paths relative to the run directory."""
    document: Dict[str, Any] = {
        "lower": report.lower,
        "upper": report.upper,
        "gap": report.gap,
        "lambda_star": report.lambda_star,
        "delta": report.delta,
        "lambda_step": report.lambda_step,
        "radius": report.radius,
        "radius_mode": report.radius_mode,
        "cells": report.cells,
        "weight": report.weight,
        "c_lb_prior": report.c_lb_prior,
        "witness_ratio": report.witness_ratio,
        "norm_ratio": report.norm_ratio,
        "range_covered": report.range_covered,
        "infeasible_points": report.infeasible_points,
        "passes": [sweep_pass.summary() for sweep_pass in report.passes],
        "error_terms": {
            "discretization": report.error_terms.discretization,
            "lambda_grid": report.error_terms.lambda_grid,
            "radius_note": report.error_terms.radius_note,
            "rounding_note": report.error_terms.rounding_note,
            "estimate_note": report.error_terms.estimate_note,
        },
        "per_lambda_table": LAMBDA_TABLE_FILE,
        "block_diagnostics": BLOCK_DIAGNOSTICS_FILE,
        "extremizer": EXTREMIZER_FILE,
    }
    if fixed_point is not None:
        document["fixed_point"] = fixed_point_document(fixed_point)
    if extras:
        document.update(extras)
    return document


def fixed_point_document(result: FixedPointResult) -> Dict[str, Any]:
    return {
        "value": result.value,
        "iterations": result.iterations,
        "converged": result.converged,
        "last_delta": result.last_delta,
        "trace": TRACE_FILE,
        "extremizer": FIXED_POINT_EXTREMIZER_FILE,
    }


def write_fixed_point(result: FixedPointResult, out_dir: Path) -> List[Path]:
    return [
        write_trace(result, out_dir / TRACE_FILE),
        export_extremizer_plot_data(result.extremizer, out_dir / FIXED_POINT_EXTREMIZER_FILE),
    ]


def write_report(
    report: BoundsReport,
    out_dir: Path,
    fixed_point: Optional[FixedPointResult] = None,
    extras: Optional[Dict[str, Any]] = None,
) -> List[Path]:
    """Write report.json with the per-λ table, the block diagnostics and the extremizer next to it."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        write_json(report_document(report, fixed_point, extras), out_dir / REPORT_FILE),
        write_tsv(lambda_table(report), out_dir / LAMBDA_TABLE_FILE),
        write_tsv(block_diagnostics_table(report), out_dir / BLOCK_DIAGNOSTICS_FILE),
        export_extremizer_plot_data(report, out_dir / EXTREMIZER_FILE),
    ]
    if fixed_point is not None:
        paths.extend(write_fixed_point(fixed_point, out_dir))
    logger.info(f"Wrote report to {out_dir}")
    return paths


def write_manifest(out_dir: Path, artifacts: Iterable[Path], config: Dict[str, Any], command: str) -> Path:
    """manifest.json listing artifacts with their hashes and the hash of the run configuration."""
    artifacts = sorted({Path(p) for p in artifacts})
    manifest = {
        "command": command,
        "config_hash": get_hash(config),
        "config": config,
        "artifacts": {
            p.relative_to(out_dir).as_posix() if p.is_relative_to(out_dir) else str(p): get_hash(p)
            for p in artifacts
        },
    }
    return write_json(manifest, out_dir / MANIFEST_FILE)
