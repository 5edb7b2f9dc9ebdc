"""End-to-end QRKD analysis on a quantile grid."""

from dataclasses import dataclass

import numpy as np

from .bandwidth import build_plan, density_pilots, fixed_plan
from .inference import all_tests, simulate_pivotal, standard_errors, uniform_band
from .local_fit import fit_local_poly, fit_local_poly_cov, qrkd_point

DEFAULT_GRID = tuple(np.round(np.arange(0.10, 0.9001, 0.05), 10))


def make_grid(tau_min=0.1, tau_max=0.9, step=0.05):
    if not 0 < tau_min <= tau_max < 1:
        raise ValueError("grid must satisfy 0 < tau_min <= tau_max < 1")
    if step <= 0:
        raise ValueError("grid step must be positive")
    k = int(np.floor((tau_max - tau_min) / step + 1e-9))
    return tuple(float(round(tau_min + i * step, 10)) for i in range(k + 1))


@dataclass
class Analysis:
    plan: object
    fits: list
    estimates: list
    draws: object = None
    se: np.ndarray | None = None
    tests: list | None = None
    band: object = None

    @property
    def values(self):
        return np.array([e.value for e in self.estimates])


def fit_grid(sample, design, plan, p=2, covariates=False):
    fit = fit_local_poly_cov if covariates else fit_local_poly
    fits = [fit(sample, design, t, plan.h(t), p) for t in plan.grid]
    return fits, [qrkd_point(f, design) for f in fits]


def analyze(
    sample,
    design,
    grid=DEFAULT_GRID,
    p=2,
    M=1000,
    seed=0,
    level=0.95,
    bandwidth=None,
    inference=True,
    covariates=False,
):
    """Bandwidth plan, per-quantile fits and, optionally, pivotal inference.

    ``bandwidth`` overrides the data-driven plan with one fixed value.
    Inference is not available with covariates.
    """
    if bandwidth is None:
        plan = build_plan(sample, design, grid)
    else:
        plan = fixed_plan(grid, bandwidth)
        plan = type(plan)(
            plan.grid, plan.h_per_tau, plan.base_h, plan.c_of_tau, plan.caps_applied,
            density_pilots(sample, design),
        )
    fits, estimates = fit_grid(sample, design, plan, p, covariates)
    out = Analysis(plan, fits, estimates)
    if inference and not covariates:
        out.draws = simulate_pivotal(sample, design, plan, fits, M, seed)
        out.se = standard_errors(plan, out.draws)
        out.tests = all_tests(estimates, plan, out.draws, level)
        out.band = uniform_band(estimates, plan, out.draws, level)
    return out
