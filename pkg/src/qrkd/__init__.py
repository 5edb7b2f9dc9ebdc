"""Quantile regression kink design (QRKD) estimation and uniform inference."""

from .bandwidth import BandwidthPlan, DensityPilots, build_plan, fixed_plan
from .dgp import MonteCarloConfig, MonteCarloReport, StructureSpec, draw_sample, run_monte_carlo, true_qrkd
from .inference import (
    PivotalDraws,
    TestResult,
    UniformBand,
    simulate_pivotal,
    standard_errors,
    test_heterogeneity,
    test_significance,
    uniform_band,
)
from .kernels import cross_kernel_T, design_matrix_N, kernel_eval, kernel_moment
from .local_fit import KinkDesign, LocalPolyFit, QrkdEstimate, Sample, fit_local_poly, fit_local_poly_cov, qrkd_point
from .pipeline import DEFAULT_GRID, Analysis, analyze, make_grid
from .qr import CheckLossProblem, QrSolution, check_loss, solve_weighted_qr

__version__ = "0.1.0"

__all__ = [
    "Analysis", "BandwidthPlan", "CheckLossProblem", "DEFAULT_GRID", "DensityPilots",
    "KinkDesign", "LocalPolyFit", "MonteCarloConfig", "MonteCarloReport", "PivotalDraws",
    "QrSolution", "QrkdEstimate", "Sample", "StructureSpec", "TestResult", "UniformBand",
    "analyze", "build_plan", "check_loss", "cross_kernel_T", "design_matrix_N", "draw_sample",
    "fit_local_poly", "fit_local_poly_cov", "fixed_plan", "kernel_eval", "kernel_moment",
    "make_grid", "qrkd_point", "run_monte_carlo", "simulate_pivotal", "solve_weighted_qr",
    "standard_errors", "test_heterogeneity", "test_significance", "true_qrkd", "uniform_band",
]
