"""acbounds - certified bounds for weighted autocorrelation inequalities."""

from .certify import BoundsReport, SweepConfig, plan_sweep, sweep
from .fixedpoint import FixedPointResult, fixed_point_iterate
from .spectral import SpectralSolution, solve_c_lambda_delta
from .weight import WeightSpec, build_kernel

__all__ = [
    'BoundsReport',
    'FixedPointResult',
    'SpectralSolution',
    'SweepConfig',
    'WeightSpec',
    'build_kernel',
    'fixed_point_iterate',
    'plan_sweep',
    'solve_c_lambda_delta',
    'sweep',
]
