"""Tests for the run driver: parallel chunks, caching, artifacts and exit codes."""

import json

import numpy as np
import pandas as pd
import pytest

import acbounds.acbounds as driver
from acbounds.acbounds import (
    EXIT_FIXED_POINT_NOT_CONVERGED,
    EXIT_OK,
    ParallelChunkRunner,
    chunk_id,
    run_kernel_dump,
    run_reproduce_table1,
    run_solve,
    sweep_identity,
)
from acbounds.cache import CacheManager
from acbounds.certify import SweepConfig, run_chunks_serial, split_chunks, support_radius_bound
from acbounds.config import build_run_config
from acbounds.exceptions import AcboundsError
from acbounds.output import BLOCK_DIAGNOSTICS_FILE, LAMBDA_TABLE_FILE, MANIFEST_FILE, REPORT_FILE
from acbounds.spectral import SpectralOptions
from acbounds.stepspace import grid_radius
from acbounds.utils.get_hash import get_hash
from acbounds.weight import WeightSpec, build_kernel, gaussian_means_constant, weight_norms

KEYS = ("lambda", "c_lambda_delta", "support_cells", "feasible")

SMALL = {"weight": "box", "delta": 0.05, "lambda_step": 0.05, "c_lb_prior": 0.75, "workers": 1}


def small_config(out, **changes):
    return build_run_config(overrides={**SMALL, "out": out, **changes})


def project(rows):
    return [tuple(row[key] for key in KEYS) for row in rows]


@pytest.fixture
def chunks():
    return split_chunks(np.linspace(0.5, 0.9, 9), 4)


def test_chunk_id_depends_on_values_only():
    assert chunk_id([0.5, 0.55]) == chunk_id(np.array([0.5, 0.55]))
    assert chunk_id([0.5, 0.55]) != chunk_id([0.5, 0.6])


def test_process_pool_matches_serial(box_kernel, chunks):
    opts = SpectralOptions()
    serial = run_chunks_serial(box_kernel, chunks, 1.1, opts)
    parallel = ParallelChunkRunner(workers=2)(box_kernel, chunks, 1.1, opts)
    assert project(parallel) == project(serial)


def test_cached_chunks_are_not_recomputed(tmp_path, monkeypatch, box_kernel, chunks):
    manager = CacheManager(tmp_path)
    process_id = manager.start_process("hash", total_points=9)
    progress = []
    first = ParallelChunkRunner(1, manager, process_id, progress_callback=lambda s, t: progress.append((s, t)))
    rows = first(box_kernel, chunks, 1.1, SpectralOptions())
    assert progress[-1] == (9, 9)

    def fail(*args):
        raise AssertionError("solver called for a cached chunk")

    monkeypatch.setattr(driver, "solve_chunk", fail)
    second = ParallelChunkRunner(1, manager, process_id, manager.get_cached_results(process_id))
    assert project(second(box_kernel, chunks, 1.1, SpectralOptions())) == project(rows)


def test_failed_chunk_raises(monkeypatch, box_kernel, chunks):
    def fail(*args):
        raise RuntimeError("boom")

    monkeypatch.setattr(driver, "solve_chunk", fail)
    with pytest.raises(AcboundsError, match="boom"):
        ParallelChunkRunner(workers=1)(box_kernel, chunks, 1.1, SpectralOptions())


def test_solve_writes_certified_report(tmp_path):
    outcome = run_solve(small_config(tmp_path / "run"), cache_enabled=False)
    assert outcome.exit_code == EXIT_OK

    document = json.loads((tmp_path / "run" / REPORT_FILE).read_text())
    assert 0.75 <= document["lower"] <= 0.8055896
    assert document["upper"] >= 0.8055809
    assert document["range_covered"] is True
    assert document["witness_ratio"] >= document["lower"] * (1 - 1e-9)
    assert [p["name"] for p in document["passes"]] == ["coarse", "refine"]

    table = pd.read_csv(tmp_path / "run" / LAMBDA_TABLE_FILE, sep="\t")
    assert table["c_lambda_delta"].max() == document["lower"]

    values = pd.read_csv(tmp_path / "run" / "extremizer.tsv", sep="\t")["value"].to_numpy()
    assert values.min() >= 0.0
    support = values[values > 0]
    np.testing.assert_allclose(support, support[::-1], rtol=1e-6)
    peak, tol = int(np.argmax(values)), 1e-8 * values.max()
    assert np.all(np.diff(values[:peak + 1]) >= -tol)
    assert np.all(np.diff(values[peak:]) <= tol)

    blocks = pd.read_csv(tmp_path / "run" / BLOCK_DIAGNOSTICS_FILE, sep="\t")
    assert document["block_diagnostics"] == BLOCK_DIAGNOSTICS_FILE
    assert len(blocks) == sum(len(point.blocks) for point in outcome.report.per_lambda) > 0
    assert list(blocks.columns) == ["pass", "lambda", "k", "mu", "feasible", "iterations", "converged"]
    assert set(blocks["lambda"]) == set(table["lambda"])

    manifest = json.loads((tmp_path / "run" / MANIFEST_FILE).read_text())
    assert set(manifest["artifacts"]) == {REPORT_FILE, LAMBDA_TABLE_FILE, BLOCK_DIAGNOSTICS_FILE, "extremizer.tsv"}
    assert "out" not in manifest["config"]


def test_identical_runs_give_identical_files(tmp_path):
    run_solve(small_config(tmp_path / "a"), cache_enabled=False)
    run_solve(small_config(tmp_path / "b", workers=2), cache_enabled=False)
    for name in (REPORT_FILE, LAMBDA_TABLE_FILE, BLOCK_DIAGNOSTICS_FILE, "extremizer.tsv", MANIFEST_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_resumed_sweep_reuses_every_point(tmp_path, monkeypatch):
    cache_dir = tmp_path / "cache"
    first = run_solve(small_config(tmp_path / "a"), cache_dir=cache_dir)

    def fail(*args):
        raise AssertionError("solver called for a cached chunk")

    monkeypatch.setattr(driver, "solve_chunk", fail)
    second = run_solve(small_config(tmp_path / "b"), process_id=first.process_id, cache_dir=cache_dir)
    assert second.process_id == first.process_id
    assert (tmp_path / "a" / REPORT_FILE).read_bytes() == (tmp_path / "b" / REPORT_FILE).read_bytes()


def test_unconverged_fixed_point_exit_code(tmp_path):
    outcome = run_solve(small_config(tmp_path, method="fixedpoint", fp_max_iter=5), cache_enabled=False)
    assert outcome.exit_code == EXIT_FIXED_POINT_NOT_CONVERGED
    assert outcome.report is None
    document = json.loads((tmp_path / REPORT_FILE).read_text())
    assert document["method"] == "fixedpoint"
    assert document["fixed_point"]["iterations"] == 5
    assert document["fixed_point"]["converged"] is False


def test_fixed_point_restarts_keep_the_best(tmp_path):
    single = run_solve(small_config(tmp_path / "one", method="fixedpoint", fp_max_iter=20), cache_enabled=False)
    best = run_solve(
        small_config(tmp_path / "three", method="fixedpoint", fp_max_iter=20, fp_restarts=3), cache_enabled=False
    )
    assert best.fixed_point.value >= single.fixed_point.value


def test_rescaled_gaussian_bounds(tmp_path):
    cfg = small_config(
        tmp_path, weight="gaussian", c_lb_prior=0.7, method="fixedpoint", fp_max_iter=50, gaussian_exponent=1.0,
    )
    outcome = run_solve(cfg, cache_enabled=False)
    document = json.loads((tmp_path / REPORT_FILE).read_text())
    assert document["rescaled"]["gaussian_exponent"] == 1.0
    assert document["rescaled"]["lower"] == pytest.approx(gaussian_means_constant(1.0, outcome.fixed_point.value))


def test_kernel_dump(tmp_path, box):
    outcome = run_kernel_dump(small_config(tmp_path), lags=8)
    table = pd.read_csv(outcome.artifacts[0], sep="\t")
    np.testing.assert_array_equal(table["w_tilde"].to_numpy(), build_kernel(box, 0.05, 8).values)
    assert outcome.artifacts[-1].name == MANIFEST_FILE


def test_sweep_identity_tracks_the_sample_grid():
    ws = [0.0, 0.25, 0.75, 1.0, 0.75, 0.25, 0.0]
    first = WeightSpec.tabulated([-1.0, -0.75, -0.25, 0.0, 0.25, 0.75, 1.0], ws)
    second = WeightSpec.tabulated([-1.0, -0.625, -0.375, 0.0, 0.375, 0.625, 1.0], ws)
    plan = SweepConfig(delta=0.05, lambda_lo=0.5, lambda_hi=1.0, lambda_step=0.05, radius=1.0)
    assert first.describe() == second.describe()
    assert get_hash(sweep_identity(first, plan)) != get_hash(sweep_identity(second, plan))


@pytest.mark.parametrize("weight, interval", [
    ("box", (0.80, 0.8065)),
    ("gaussian", (0.707107, 0.737788)),
])
def test_ci_mode_bounds(tmp_path, weight, interval):
    cfg = build_run_config(overrides={"weight": weight, "mode": "ci", "method": "both", "out": tmp_path})
    outcome = run_solve(cfg, cache_enabled=False)
    low, high = interval
    assert outcome.report.lower >= low
    assert outcome.report.upper <= high
    assert outcome.report.lower <= outcome.report.upper
    assert outcome.fixed_point.value <= outcome.report.upper
    assert abs(outcome.fixed_point.value - outcome.report.lower) <= 1e-5

    report = outcome.report
    w = WeightSpec.box() if weight == "box" else WeightSpec.gaussian()
    bound = grid_radius(support_radius_bound(weight_norms(w), report.c_lb_prior, report.radius_mode), report.delta)
    assert report.radius == pytest.approx(bound)
    f = report.extremizer
    support = f.midpoints[f.values > 0]
    assert np.abs(support).max() + f.delta / 2.0 <= bound + 1e-12
    assert abs(report.lambda_star - report.norm_ratio) <= report.lambda_step


@pytest.mark.slow
def test_reproduce_table1(tmp_path):
    table, exit_code = run_reproduce_table1(tmp_path, mode="paper", cache_enabled=False)
    assert exit_code == EXIT_OK
    assert list(table["weight"]) == ["box", "gaussian"]
    deviations = table[["lower_deviation", "upper_deviation", "fixed_point_deviation"]].to_numpy()
    assert deviations.max() <= 5e-7
    assert (tmp_path / "table1.tsv").exists()
