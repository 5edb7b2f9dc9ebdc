"""Per-quantile MSE-optimal bandwidths and the density pilots they need.

The rule is the first-order condition of the local linear MSE
``h^2 C1^2 + C2 / (n h^3)``, i.e. ``h* = (3 C2 / (2 C1^2))^{1/5} n^{-1/5}``,
with plug-in curvatures from an unweighted global quadratic quantile fit
and kernel density pilots for f_X(x0) and f_{Y|X}.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .local_fit import pilot_global_quadratic

C_BOUNDS = (0.2, 5.0)
CURVATURE_FLOOR = 1e-4
SLOPE_FLOOR = 1e-8

FLAG_CURVATURE = "curvature-degenerate"
FLAG_CAP = "capped-at-max"
FLAG_CLIP_LOW = "ratio-clipped-low"
FLAG_CLIP_HIGH = "ratio-clipped-high"


class ZeroVarianceError(ValueError):
    pass


class EmptyWindowError(ValueError):
    pass


@dataclass(frozen=True)
class DensityPilots:
    h_x: float
    h_bar_y: float
    h_bar_x: float
    fx_at_x0: float
    sigma_x: float
    sigma_y: float
    d_slope: float
    bh_fallback: bool = False


@dataclass(frozen=True)
class TauBandwidth:
    tau: float
    h: float
    c1: float
    c2: float
    alpha_check: float
    fyx: float
    flags: tuple = ()


@dataclass(frozen=True)
class BandwidthPlan:
    grid: tuple
    h_per_tau: dict
    base_h: float
    c_of_tau: dict
    caps_applied: dict
    pilots: DensityPilots | None = None
    details: dict = field(default_factory=dict)

    def h(self, tau):
        return self.h_per_tau[tau]

    @property
    def h_array(self):
        return np.array([self.h_per_tau[t] for t in self.grid])

    def to_dict(self):
        rows = [
            {
                "tau": t,
                "h": self.h_per_tau[t],
                "c": self.c_of_tau[t],
                "flags": list(self.caps_applied[t]),
            }
            for t in self.grid
        ]
        out = {"base_h": self.base_h, "per_tau": rows}
        if self.pilots is not None:
            out["pilots"] = {k: getattr(self.pilots, k) for k in DensityPilots.__dataclass_fields__}
        return out


def _sd(v):
    return float(np.std(v, ddof=1))


def silverman_rule(sigma, n):
    """``(int u^2 K)^{-2/5} (int K^2)^{1/5} (3 / (8 sqrt(pi)) sigma^-5)^{-1/5} n^{-1/5}``."""
    mu2 = kernels.second_moment()
    rk = kernels.roughness()
    return mu2 ** -0.4 * rk**0.2 * (3.0 / (8.0 * np.sqrt(np.pi)) * sigma**-5) ** -0.2 * n**-0.2


def silverman_fx_bandwidth(sample):
    if sample.n < 2:
        raise ValueError("need at least two observations")
    sx = _sd(sample.x)
    if sx == 0:
        raise ZeroVarianceError("running variable has zero variance")
    return silverman_rule(sx, sample.n)


def bh_v(sigma_x, sigma_y, d):
    """Auxiliary ``v`` of the Bashtannyk-Hyndman reference rule."""
    return (
        0.95 * np.sqrt(2 * np.pi) * sigma_x**3 * (3 * d**2 * sigma_x**2 + 8 * sigma_y**2)
        - 32 * sigma_x**2 * sigma_y**2 * np.exp(-2.0)
    )


def bh_rule(sigma_x, sigma_y, d, n):
    """Reference-rule bandwidths ``(h_y, h_x)`` for a conditional density.

    Transcribed term by term; ``d`` enters through ``|d|`` since the rule
    raises it to fractional powers. Returns ``None`` when ``v <= 0`` or
    the slope is negligible on the data scale (rule undefined).
    """
    d = abs(d)
    v = bh_v(sigma_x, sigma_y, d)
    if v <= 0 or d <= SLOPE_FLOOR * sigma_y / sigma_x:
        return None
    rk = kernels.roughness()
    var_k = kernels.second_moment()
    num = 32 * rk**2 * sigma_y**5 * (260 * np.pi**9 * sigma_x**58) ** 0.125
    den = (
        n
        * var_k**2
        * d**2.5
        * v**0.75
        * (np.sqrt(v) + d * (16.25 * np.pi * sigma_x**10) ** 0.25)
    )
    h_x = (num / den) ** (1.0 / 6.0)
    h_y = (d**2 * v / (2.85 * np.sqrt(2 * np.pi) * sigma_x**5)) ** 0.25 * h_x
    return h_y, h_x


def ols_slope(x, y):
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def bh_conditional_bandwidths(sample):
    """Return ``(h_bar_y, h_bar_x, fell_back)``.

    When the reference rule is undefined each bandwidth falls back to the
    Silverman-type rule applied to its own variable.
    """
    sx, sy = _sd(sample.x), _sd(sample.y)
    if sx == 0 or sy == 0:
        raise ZeroVarianceError("zero sample variance in x or y")
    res = bh_rule(sx, sy, ols_slope(sample.x, sample.y), sample.n)
    if res is None:
        return silverman_rule(sy, sample.n), silverman_rule(sx, sample.n), True
    return res[0], res[1], False


def kde_fx(sample, h_x, x0):
    """Tricube kernel density of the running variable at ``x0``."""
    if h_x <= 0:
        raise ValueError("bandwidth must be positive")
    return float(np.sum(kernels.tricube((sample.x - x0) / h_x)) / (sample.n * h_x))


def cond_density_fyx(sample, h_bar_y, h_bar_x, y0, x0):
    """Product-kernel estimate of f_{Y|X}(y0 | x0)."""
    if h_bar_y <= 0 or h_bar_x <= 0:
        raise ValueError("bandwidths must be positive")
    kx = kernels.tricube((sample.x - x0) / h_bar_x)
    tot = kx.sum()
    if tot == 0:
        raise EmptyWindowError(f"no observations within {h_bar_x:.6g} of x0={x0}")
    ky = kernels.tricube((sample.y - y0) / h_bar_y) / h_bar_y
    return float(kx @ ky / tot)


def density_pilots(sample, design):
    h_x = silverman_fx_bandwidth(sample)
    hy, hx, fell_back = bh_conditional_bandwidths(sample)
    return DensityPilots(
        h_x=h_x,
        h_bar_y=hy,
        h_bar_x=hx,
        fx_at_x0=kde_fx(sample, h_x, design.x0),
        sigma_x=_sd(sample.x),
        sigma_y=_sd(sample.y),
        d_slope=ols_slope(sample.x, sample.y),
        bh_fallback=fell_back,
    )


def _contrast():
    return np.array([0.0, 1.0, -1.0])


def curvature_constant(beta2_plus, beta2_minus):
    """C1: leading bias coefficient of the local linear slope difference."""
    N1 = kernels.design_matrix_N(1)
    m = kernels.kernel_moment
    vec = np.array(
        [
            beta2_plus * m(2, "plus") + beta2_minus * m(2, "minus"),
            beta2_plus * m(3, "plus"),
            beta2_minus * m(3, "minus"),
        ]
    )
    return float(_contrast() @ np.linalg.solve(N1, vec) / 2.0)


def variance_constant(tau, fx, fyx):
    """C2: leading variance coefficient, ``Var = C2 / (n h^3)``."""
    N1 = kernels.design_matrix_N(1)
    T1 = kernels.variance_matrix(1)
    a = np.linalg.solve(N1, _contrast())
    return float(tau * (1 - tau) * (a @ T1 @ a) / (fx * fyx**2))


def max_bandwidth(sample):
    return float(np.ptp(sample.x) / 2.0)


def optimal_rule(c1, c2, n):
    return (1.5 * c2 / c1**2) ** 0.2 * n**-0.2


def mse_optimal_bandwidth(sample, tau, design, pilots, pilot_fit=None):
    """MSE-optimal bandwidth for one quantile.

    ``pilot_fit`` may pass a precomputed ``(alpha, beta2_plus, beta2_minus)``.
    """
    alpha, b2p, b2m = pilot_fit or pilot_global_quadratic(sample, tau, design.x0)
    fyx = cond_density_fyx(sample, pilots.h_bar_y, pilots.h_bar_x, alpha, design.x0)
    c1 = curvature_constant(b2p, b2m)
    h_max = max_bandwidth(sample)
    flags = []
    if pilots.fx_at_x0 <= 0 or fyx <= 0:
        c2 = np.inf
    else:
        c2 = variance_constant(tau, pilots.fx_at_x0, fyx)
    eps = CURVATURE_FLOOR * pilots.sigma_y / pilots.sigma_x**2
    if abs(c1) < eps:
        h = h_max
        flags.append(FLAG_CURVATURE)
    else:
        h = optimal_rule(c1, c2, sample.n)
        if not h <= h_max:
            h = h_max
            flags.append(FLAG_CAP)
    return TauBandwidth(tau, float(h), c1, float(c2), alpha, fyx, tuple(flags))


def plan_from_bandwidths(grid, hs, c_bounds=C_BOUNDS, flags=None, pilots=None, details=None):
    """Assemble a plan from raw per-quantile bandwidths.

    The reference scale is the bandwidth at the median grid point and the
    ratios are clipped to ``c_bounds``.
    """
    grid = tuple(float(t) for t in grid)
    if not grid:
        raise ValueError("empty quantile grid")
    if any(not 0 < t < 1 for t in grid):
        raise ValueError("grid must lie strictly inside (0, 1)")
    order = sorted(grid)
    base = float(hs[grid.index(order[(len(order) - 1) // 2])])
    lo, hi = c_bounds
    h_per, c_per, caps = {}, {}, {}
    for i, t in enumerate(grid):
        c = hs[i] / base
        f = list(flags[i]) if flags else []
        if c < lo:
            c = lo
            f.append(FLAG_CLIP_LOW)
        elif c > hi:
            c = hi
            f.append(FLAG_CLIP_HIGH)
        c_per[t] = float(c)
        h_per[t] = float(c * base)
        caps[t] = tuple(f)
    return BandwidthPlan(grid, h_per, base, c_per, caps, pilots, details or {})


def fixed_plan(grid, h):
    return plan_from_bandwidths(grid, [float(h)] * len(grid))


def build_plan(sample, design, grid, c_bounds=C_BOUNDS, pilots=None):
    """Per-quantile MSE-optimal plan; ``pilots`` may be supplied to hold them fixed."""
    pilots = pilots or density_pilots(sample, design)
    choices = [mse_optimal_bandwidth(sample, t, design, pilots) for t in grid]
    return plan_from_bandwidths(
        grid,
        [c.h for c in choices],
        c_bounds,
        [c.flags for c in choices],
        pilots,
        {float(c.tau): c for c in choices},
    )
