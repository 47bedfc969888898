"""Tests for the power method, the feasibility check and the support-size scan."""

import json
import math

import numpy as np
import pytest
from scipy import linalg

from acbounds.exceptions import NoFeasibleSupportError
from acbounds.spectral import (
    OperatorCache,
    SpectralOptions,
    feasibility_check,
    scan_lambda_chunk,
    solve_c_lambda_delta,
    top_eigenpair,
)
from acbounds.stepspace import MixedNormParams, StepFunction, h_lambda_norm_sq, quadratic_form, witness_ratio
from acbounds.weight import WeightSpec, build_kernel


def dense_whitened_matrix(kernel, lam, k):
    """M = 2·A⁻¹(δT)A⁻¹ on a block of k cells, built densely."""
    delta = kernel.delta
    block = MixedNormParams(lam, k * delta / 2.0)
    a_inv = (np.eye(k) - block.inverse_shift * delta * np.ones((k, k))) / math.sqrt(lam)
    t = delta * linalg.toeplitz(kernel.values[:k])
    return 2.0 * a_inv @ t @ a_inv


def dense_block_value(kernel, lam, k, tol=1e-8):
    """Top eigenvalue on a block and whether its eigenvector passes the feasibility check."""
    delta = kernel.delta
    block = MixedNormParams(lam, k * delta / 2.0)
    eigenvalues, eigenvectors = linalg.eigh(dense_whitened_matrix(kernel, lam, k))
    g = eigenvectors[:, -1]
    f = (g - block.inverse_shift * delta * g.sum()) / math.sqrt(lam)
    if f.sum() < 0:
        f = -f
    return eigenvalues[-1], feasibility_check(f, tol)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_top_eigenpair_matches_dense_eigensolver(gaussian_kernel, lam):
    k = 16
    pair = top_eigenpair(gaussian_kernel, MixedNormParams(lam, 0.4), k)
    expected = linalg.eigvalsh(dense_whitened_matrix(gaussian_kernel, lam, k))[-1]
    assert pair.converged
    assert pair.mu == pytest.approx(expected, rel=1e-9)
    assert pair.residual <= 1e-12


def test_eigenvector_is_h_normalized_with_nonnegative_integral(gaussian_kernel):
    k = 12
    pair = top_eigenpair(gaussian_kernel, MixedNormParams(0.8, 0.3), k)
    block = MixedNormParams(0.8, k * gaussian_kernel.delta / 2.0)
    assert pair.vector.n == k
    assert pair.vector.values.sum() >= 0
    assert h_lambda_norm_sq(pair.vector, block) == pytest.approx(1.0, rel=1e-12)


def test_one_cell_block(box_kernel):
    """On one cell the quotient is 2δ²w̃(0)/(λδ + δ²/λ)."""
    delta, lam = box_kernel.delta, 1.3
    pair = top_eigenpair(box_kernel, MixedNormParams(lam, delta / 2.0), 1)
    expected = 2.0 * delta ** 2 * box_kernel.values[0] / (lam * delta + delta ** 2 / lam)
    assert pair.mu == pytest.approx(expected, rel=1e-12)
    assert pair.iterations == 1


def test_injected_operator_and_degenerate_detection(gaussian_kernel):
    """Two equal top eigenvalues of opposite sign stall the Rayleigh quotient."""
    matrix = np.diag([1.0, -1.0, 0.1])

    def operator(g):
        return matrix @ g

    pair = top_eigenpair(gaussian_kernel, MixedNormParams(1.0, 0.075), 3, max_iter=50, operator=operator)
    assert not pair.converged
    assert pair.iterations == 50
    assert pair.degenerate
    assert pair.second_mu is not None


@pytest.mark.parametrize("values, expected", [
    ([0.0, 1.0, 2.0, 1.0, 0.0], True),
    ([1.0, 1.0], True),
    ([0.0, 2.0, 1.0, 2.0, 0.0], False),
    ([0.0, 1.0, 2.0, 1.5, 0.0], False),
    ([-0.1, 1.0, 2.0, 1.0, -0.1], False),
    ([-1e-12, 1.0, 2.0, 1.0, -1e-12], True),
    ([0.0, 0.0, 0.0], False),
])
def test_feasibility_check(values, expected):
    assert feasibility_check(np.array(values)) is expected


def test_feasibility_check_accepts_step_functions():
    f = StepFunction(0.1, 0.25, [0.5, 1.0, 1.0, 0.5, 0.0])
    assert feasibility_check(f) is False
    assert feasibility_check(StepFunction(0.1, 0.25, [0.0, 0.5, 1.0, 0.5, 0.0]))


def test_full_scan_matches_dense_oracle(gaussian_kernel):
    lam, radius = 0.9, 0.6
    n = 24
    solution = solve_c_lambda_delta(gaussian_kernel, MixedNormParams(lam, radius), SpectralOptions(k_scan='full'))

    feasible_values = [mu for mu, ok in (dense_block_value(gaussian_kernel, lam, k) for k in range(1, n + 1)) if ok]
    assert solution.feasible
    assert solution.c_lambda_delta == pytest.approx(max(feasible_values), rel=1e-7)
    assert len(solution.diagnostics) == n
    assert solution.extremizer.n == n
    assert solution.extremizer.values.min() >= 0.0


def test_solution_is_witnessed(gaussian_kernel):
    """Q(f,f)/(‖f‖₁‖f‖₂) of the extremizer is at least c_{λ,δ}."""
    solution = solve_c_lambda_delta(gaussian_kernel, MixedNormParams(1.1, 0.8), SpectralOptions(k_scan='full'))
    assert witness_ratio(gaussian_kernel, solution.extremizer) >= solution.c_lambda_delta - 1e-12


def test_pruned_scan_from_the_optimum_agrees_with_full_scan(gaussian_kernel):
    p = MixedNormParams(1.0, 0.8)
    full = solve_c_lambda_delta(gaussian_kernel, p, SpectralOptions(k_scan='full'))
    pruned = solve_c_lambda_delta(gaussian_kernel, p, SpectralOptions(k_scan='pruned'), k_start=full.support_cells)
    assert pruned.c_lambda_delta == full.c_lambda_delta
    assert pruned.support_cells == full.support_cells
    assert len(pruned.diagnostics) <= len(full.diagnostics)


def test_kernel_too_short(gaussian):
    kernel = build_kernel(gaussian, 0.05, 10)
    with pytest.raises(ValueError):
        solve_c_lambda_delta(kernel, MixedNormParams(1.0, 0.5))


def test_scan_lambda_chunk_is_independent_of_chunking(gaussian_kernel):
    lambdas = [0.8, 0.85, 0.9, 0.95]
    whole = scan_lambda_chunk(gaussian_kernel, lambdas, 0.8)
    halves = scan_lambda_chunk(gaussian_kernel, lambdas[:2], 0.8) + scan_lambda_chunk(gaussian_kernel, lambdas[2:], 0.8)
    assert [s.lam for s in whole] == lambdas
    assert whole[0].c_lambda_delta == halves[0].c_lambda_delta
    assert whole[1].c_lambda_delta == halves[1].c_lambda_delta
    for solution in whole:
        assert solution.summary()["lambda"] == solution.lam


def test_values_stay_inside_the_known_gaussian_interval(gaussian_kernel):
    """Every c_{λ,δ} is witnessed by a nonnegative function, so it cannot pass (2/3)^{3/4}."""
    lambdas = [0.7, 0.9, 1.1, 1.3]
    values = [s.c_lambda_delta for s in scan_lambda_chunk(gaussian_kernel, lambdas, 0.8, SpectralOptions(k_scan='full'))]
    assert max(values) <= 0.737788
    assert max(values) > 0.65


def test_summary_carries_block_diagnostics(gaussian_kernel):
    solution = solve_c_lambda_delta(gaussian_kernel, MixedNormParams(1.0, 0.3), SpectralOptions(k_scan='full'))
    row = solution.summary()
    assert [block["k"] for block in row["blocks"]] == list(range(1, 13))
    assert set(row["blocks"][0]) == {"k", "mu", "feasible", "iterations", "converged"}
    assert row["second_mu"] == solution.second_mu
    assert json.loads(json.dumps(row)) == row


def test_operator_cache_reuses_blocks(gaussian_kernel):
    cache = OperatorCache(gaussian_kernel)
    assert cache.get(5) is cache.get(5)
    assert cache.get(5) is not cache.get(6)


def test_no_feasible_support_error_keeps_candidate():
    error = NoFeasibleSupportError("nothing usable", best_candidate="pair")
    assert error.best_candidate == "pair"


def random_oracle_cases(count=10, seed=2024):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(count):
        kind = str(rng.choice(["box", "gaussian"]))
        delta = float(rng.choice([0.05, 0.1]))
        cells = int(rng.integers(16, 65))
        cases.append((kind, float(rng.uniform(0.4, 2.5)), delta, cells))
    return cases


@pytest.mark.parametrize("kind, lam, delta, cells", random_oracle_cases())
def test_full_scan_matches_dense_oracle_on_random_grids(kind, lam, delta, cells):
    weight = WeightSpec.box() if kind == "box" else WeightSpec.gaussian()
    kernel = build_kernel(weight, delta, cells)
    p = MixedNormParams(lam, cells * delta / 2.0)
    solution = solve_c_lambda_delta(kernel, p, SpectralOptions(k_scan='full'))

    feasible_values = [mu for mu, ok in (dense_block_value(kernel, lam, k) for k in range(1, cells + 1)) if ok]
    assert solution.feasible
    assert solution.c_lambda_delta == pytest.approx(max(feasible_values), abs=1e-10)


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e4])
def test_rayleigh_quotient_is_scale_invariant(gaussian_kernel, scale):
    p = MixedNormParams(0.9, 0.8)
    solution = solve_c_lambda_delta(gaussian_kernel, p, SpectralOptions(k_scan='full'))
    f = solution.extremizer
    g = StepFunction(f.delta, f.radius, scale * f.values)
    quotient = 2.0 * quadratic_form(gaussian_kernel, g, g) / h_lambda_norm_sq(g, p)
    assert quotient == pytest.approx(solution.c_lambda_delta, rel=1e-12)
    assert witness_ratio(gaussian_kernel, g) == pytest.approx(witness_ratio(gaussian_kernel, f), rel=1e-12)


@pytest.mark.parametrize("lam", [0.3, 0.6, 1.0, 1.7, 3.0])
def test_values_respect_the_a_priori_bound(gaussian_kernel, lam):
    solution = solve_c_lambda_delta(gaussian_kernel, MixedNormParams(lam, 0.8), SpectralOptions(k_scan='full'))
    assert solution.c_lambda_delta <= min(2.0 * lam, 2.0 / lam)
