"""Pivotal simulation of the limiting QRKD process and uniform inference.

Each draw replaces the Bahadur-representation signs ``tau - 1{y_i <= Q}``
with ``tau - 1{u_i <= tau}`` for fresh uniforms ``u`` that are independent
of the data. One uniform vector is shared by every quantile within a draw,
which is what carries the cross-quantile covariance of the limit process.

Two choices control the scale of each draw. ``jacobian="sample"`` (default)
inverts the kernel-weighted Gram matrix of the realised design near the
kink; ``"population"`` uses the density times the limiting moment matrix.
The conditional density at the quantile comes from a weighted kernel
estimate on the local-fit residuals (``density="residual"``), falling back
to the product-kernel estimate when that is degenerate.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import kernels
from ._random import substream
from .bandwidth import cond_density_fyx
from .local_fit import one_sided_basis

SIGNIFICANCE = "significance"
HETEROGENEITY = "heterogeneity"


class ZeroDensityError(ValueError):
    pass


class DegenerateDrawsError(ValueError):
    pass


@dataclass(frozen=True)
class PivotalDraws:
    grid: tuple
    draws: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float)
        if d.ndim != 2 or d.shape[1] != len(self.grid) or d.shape[0] < 1:
            raise ValueError("draws must be an M x len(grid) matrix with M >= 1")
        if not np.all(np.isfinite(d)):
            raise ValueError("non-finite pivotal draws")
        object.__setattr__(self, "draws", d)

    @property
    def M(self):
        return self.draws.shape[0]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    critical_value: float
    p_value: float
    kind: str
    standardized: bool
    level: float
    grid: tuple

    @property
    def reject(self):
        return self.statistic > self.critical_value

    def to_dict(self):
        return {
            "kind": self.kind,
            "standardized": self.standardized,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "level": self.level,
            "reject": self.reject,
            "grid": list(self.grid),
        }


@dataclass(frozen=True)
class UniformBand:
    grid: tuple
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    critical_value: float

    def to_dict(self):
        return {
            "level": self.level,
            "critical_value": self.critical_value,
            "grid": list(self.grid),
            "estimate": self.estimate.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }


JACOBIANS = ("sample", "population")


def influence_weights(x, x0, tau, h, p, fx_at_x0=None, jacobian="population"):
    """Per-observation weights ``(e2 - e3)' J^{-1} z_i K_i`` (zero outside the window).

    ``jacobian="population"`` takes ``J = f_X(x0) N`` and needs ``fx_at_x0``;
    ``"sample"`` takes the kernel Gram matrix ``(nh)^{-1} sum z_i z_i' K_i``,
    which tracks how the running-variable density varies across the window.
    """
    if jacobian not in JACOBIANS:
        raise ValueError(f"unknown jacobian {jacobian!r}")
    u = (x - x0) / h
    k = kernels.tricube(u)
    out = np.zeros(x.size)
    win = k > 0
    if not np.any(win):
        return out
    z = kernels.basis_vector(u[win], p)
    if jacobian == "population":
        if fx_at_x0 is None or fx_at_x0 <= 0:
            raise ZeroDensityError(f"density plug-in is zero (f_X={fx_at_x0})")
        J = fx_at_x0 * kernels.design_matrix_N(p)
    else:
        J = (z * k[win, None]).T @ z / (x.size * h)
        if np.linalg.matrix_rank(J) < J.shape[0]:
            raise ZeroDensityError(f"singular kernel Gram matrix at h={h}")
    out[win] = (z @ np.linalg.solve(J, _contrast(p))) * k[win]
    return out


def _contrast(p):
    e = np.zeros(2 * p + 1)
    e[1], e[2] = 1.0, -1.0
    return e


def _denominator(design, n, h, fyx):
    if fyx <= 0:
        raise ZeroDensityError(f"density plug-in is zero (f_Y|X={fyx})")
    return design.slope_jump * np.sqrt(n * h) * fyx


def pivotal_influence(sample, design, tau, h, fx_at_x0, fyx_at_tau, u_draw, p=2,
                      jacobian="population"):
    """One simulated value of the limit process at ``tau`` for uniforms ``u_draw``."""
    a = influence_weights(sample.x, design.x0, tau, h, p, fx_at_x0, jacobian)
    signs = tau - (np.asarray(u_draw) <= tau)
    return float(a @ signs / _denominator(design, sample.n, h, fyx_at_tau))


def hall_sheather(n, tau, alpha=0.05):
    """Hall-Sheather quantile step used to size the residual-density bandwidth."""
    z = norm.ppf(tau)
    return (
        n ** (-1 / 3)
        * norm.ppf(1 - alpha / 2) ** (2 / 3)
        * (1.5 * norm.pdf(z) ** 2 / (2 * z**2 + 1)) ** (1 / 3)
    )


def residual_density(sample, design, fit):
    """Kernel estimate of f_{Y|X}(Q(tau|x0) | x0) from local-fit residuals.

    Residuals ``y_i - Q_hat(tau | x_i)`` of the in-window observations are
    smoothed at zero, weighting each by its x-kernel weight. The residual
    bandwidth is a robust residual scale times the normal-quantile spread
    over a Hall-Sheather step, computed for the kernel-effective sample size.
    """
    w = kernels.tricube((sample.x - design.x0) / fit.h)
    win = w > 0
    w = w[win]
    Z = one_sided_basis(sample.x[win] - design.x0, fit.p)
    coef = np.concatenate([[fit.alpha], np.column_stack([fit.beta_plus, fit.beta_minus]).ravel()])
    r = sample.y[win] - Z @ coef
    n_eff = w.sum() ** 2 / (w @ w)
    t = fit.tau
    delta = min(hall_sheather(n_eff, t), 0.5 * min(t, 1 - t))
    q1, q3 = np.quantile(r, [0.25, 0.75])
    scale = min(np.std(r, ddof=1), (q3 - q1) / 1.349)
    if not scale > 0:
        return None
    hy = scale * (norm.ppf(t + delta) - norm.ppf(t - delta))
    f = float(w @ kernels.tricube(r / hy) / (hy * w.sum()))
    return f if f > 0 else None


def density_plugins(sample, design, plan, fits, pilots, method="residual"):
    """Per-quantile f_{Y|X} plug-ins at the fitted intercepts.

    ``method="residual"`` uses :func:`residual_density`, falling back to the
    product-kernel pilot estimator where it is not positive;
    ``"kernel"`` uses the pilot estimator throughout.
    """
    if method not in ("residual", "kernel"):
        raise ValueError(f"unknown density method {method!r}")
    out = []
    for fit in fits:
        f = residual_density(sample, design, fit) if method == "residual" else None
        if f is None:
            f = cond_density_fyx(sample, pilots.h_bar_y, pilots.h_bar_x, fit.alpha, design.x0)
        out.append(f)
    return out


def simulate_pivotal(
    sample, design, plan, fits, M=1000, seed=0, pilots=None, p=None, fyx=None,
    density="residual", jacobian="sample",
):
    """Simulate ``M`` paths of the limit process on the plan grid.

    ``fits`` are the per-quantile local fits in grid order. ``fyx`` may give
    the conditional density plug-ins directly; otherwise they come from
    :func:`density_plugins`. Draw ``j`` uses the substream ``(seed, j)``.
    """
    pilots = pilots or plan.pilots
    if pilots is None:
        raise ValueError("density pilots are required")
    grid = plan.grid
    n = sample.n
    p = p or fits[0].p
    source = "given" if fyx is not None else density
    if fyx is None:
        fyx = density_plugins(sample, design, plan, fits, pilots, density)
    weights, dens = [], []
    for t, f in zip(grid, fyx):
        h = plan.h(t)
        weights.append(influence_weights(sample.x, design.x0, t, h, p, pilots.fx_at_x0, jacobian))
        dens.append(_denominator(design, n, h, f))
    A = np.array(weights)
    support = np.flatnonzero(np.any(A != 0, axis=0))
    A_s = A[:, support]
    U = np.empty((M, support.size))
    for j in range(M):
        U[j] = substream(seed, j).random(n)[support]
    out = np.empty((M, len(grid)))
    for i, t in enumerate(grid):
        hits = (U <= t).astype(float) @ A_s[i]
        out[:, i] = (t * A_s[i].sum() - hits) / dens[i]
    meta = {
        "n": n,
        "p": p,
        "bandwidths": [plan.h(t) for t in grid],
        "fx_at_x0": pilots.fx_at_x0,
        "fyx": list(fyx),
        "density": source,
        "jacobian": jacobian,
    }
    return PivotalDraws(tuple(grid), out, int(seed), meta)


def grid_mean(values, grid):
    """Trapezoid-rule ``|T|^{-1} int_T`` along the last axis."""
    g = np.asarray(grid, dtype=float)
    if g.size < 2:
        raise ValueError("heterogeneity needs at least two grid points")
    return np.trapezoid(values, g, axis=-1) / (g[-1] - g[0])


def demean(values, grid):
    values = np.asarray(values, dtype=float)
    return values - grid_mean(values, grid)[..., None]


def se_from_draws(draws):
    """Pointwise SDs of the simulated process and of its demeaned version."""
    if draws.M < 2:
        raise ValueError("need at least two draws")
    s = draws.draws.std(axis=0, ddof=1)
    if np.any(s == 0):
        raise DegenerateDrawsError("zero spread of simulated process at some quantile")
    if len(draws.grid) < 2:
        return s, None
    hd = demean(draws.draws, draws.grid).std(axis=0, ddof=1)
    if np.any(hd <= 1e-12 * s.max()):
        raise DegenerateDrawsError("zero spread of demeaned process at some quantile")
    return s, hd


def critical_value(sups, level):
    """Order statistic ``ceil(level (M+1))`` of the simulated sups (0 below the first)."""
    if not 0 <= level < 1:
        raise ValueError("level must lie in [0, 1)")
    s = np.sort(np.asarray(sups, dtype=float))
    k = int(np.ceil(level * (s.size + 1) - 1e-12))
    if k == 0:
        return 0.0
    return float(s[min(k, s.size) - 1])


def p_value(statistic, sups):
    sups = np.asarray(sups)
    return float((1 + np.count_nonzero(sups >= statistic)) / (sups.size + 1))


def _values(estimates):
    return np.array([getattr(e, "value", e) for e in estimates], dtype=float)


def _scaling(plan, draws):
    if tuple(plan.grid) != tuple(draws.grid):
        raise ValueError("plan and draws use different quantile grids")
    return np.sqrt(draws.meta["n"] * plan.h_array**3)


def _run_test(kind, vals, plan, draws, level, standardized):
    root = _scaling(plan, draws)
    if len(vals) != len(draws.grid):
        raise ValueError("estimates and draws use different quantile grids")
    sim = draws.draws
    if kind == HETEROGENEITY:
        vals = demean(vals, draws.grid)
        sim = demean(sim, draws.grid)
    stat_path = root * np.abs(vals)
    sim_path = np.abs(sim)
    if standardized:
        s, hd = se_from_draws(draws)
        sd = hd if kind == HETEROGENEITY else s
        stat_path = stat_path / sd
        sim_path = sim_path / sd
    stat = float(stat_path.max())
    sups = sim_path.max(axis=1)
    return TestResult(
        stat,
        critical_value(sups, level),
        p_value(stat, sups),
        kind,
        bool(standardized),
        float(level),
        tuple(draws.grid),
    )


def test_significance(estimates, plan, draws, level=0.95, standardized=False):
    """Sup test of QRKD(tau) = 0 on the grid."""
    return _run_test(SIGNIFICANCE, _values(estimates), plan, draws, level, standardized)


def test_heterogeneity(estimates, plan, draws, level=0.95, standardized=False):
    """Sup test of QRKD(tau) constant on the grid."""
    if len(draws.grid) < 2:
        raise ValueError("heterogeneity needs at least two grid points")
    return _run_test(HETEROGENEITY, _values(estimates), plan, draws, level, standardized)


# keep pytest from collecting the two public test_* functions when imported
test_significance.__test__ = False
test_heterogeneity.__test__ = False


def all_tests(estimates, plan, draws, level=0.95):
    out = []
    for fn in (test_significance, test_heterogeneity):
        for std in (False, True):
            out.append(fn(estimates, plan, draws, level, std))
    return out


def standard_errors(plan, draws):
    s, _ = se_from_draws(draws)
    return s / _scaling(plan, draws)


def uniform_band(estimates, plan, draws, level=0.95):
    """Simultaneous band ``est +- crit * sigma_s / sqrt(n h^3)``.

    ``crit`` is taken from the standardized sup process.
    """
    vals = _values(estimates)
    s, _ = se_from_draws(draws)
    crit = critical_value(np.abs(draws.draws / s).max(axis=1), level)
    half = crit * s / _scaling(plan, draws)
    return UniformBand(tuple(draws.grid), vals, vals - half, vals + half, float(level), crit)
