"""Local polynomial quantile smoothers at a known kink and the QRKD ratio."""

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .kernels import tricube
from .qr import DEGENERATE, CheckLossProblem, RankDeficientError, solve_weighted_qr

COVARIATE_SIGN = (
    "covariates enter the check-loss residual as y - alpha - sum(...) + W'gamma; "
    "the fitted quantile is alpha + sum(...) - W'gamma"
)


class LocalFitError(RankDeficientError):
    """Local window cannot support the polynomial design."""

    def __init__(self, message, tau=None, h=None, n_effective=None):
        super().__init__(message)
        self.tau = tau
        self.h = h
        self.n_effective = n_effective


@dataclass(frozen=True)
class Sample:
    y: np.ndarray
    x: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float).ravel()
        if y.shape != x.shape:
            raise ValueError(f"y and x lengths differ: {y.size} vs {x.size}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if self.W is not None:
            W = np.asarray(self.W, dtype=float)
            if W.ndim == 1:
                W = W[:, None]
            if W.shape[0] != y.size or W.shape[1] < 1:
                raise ValueError("covariate matrix must be n x k with k >= 1")
            if not np.all(np.isfinite(W)):
                raise ValueError("covariates contain non-finite values")
            object.__setattr__(self, "W", W)

    @property
    def n(self):
        return self.y.size


@dataclass(frozen=True)
class KinkDesign:
    x0: float
    slope_right: float
    slope_left: float

    def __post_init__(self):
        if self.slope_right == self.slope_left:
            raise ValueError("policy slopes must differ on the two sides of the kink")

    @property
    def slope_jump(self):
        return self.slope_right - self.slope_left


@dataclass(frozen=True)
class LocalPolyFit:
    tau: float
    h: float
    p: int
    alpha: float
    beta_plus: np.ndarray
    beta_minus: np.ndarray
    n_effective: int
    gamma: np.ndarray | None = None
    status: str = "optimal"
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class QrkdEstimate:
    tau: float
    value: float
    numerator: float
    fit: LocalPolyFit


def one_sided_basis(dx, p, scale=1.0):
    """Columns ``[1, (dx/s)^v d+/v!, (dx/s)^v d-/v!]`` for v = 1..p."""
    u = dx / scale
    out = np.empty((dx.size, 2 * p + 1))
    out[:, 0] = 1.0
    plus = dx > 0
    minus = dx < 0
    for v in range(1, p + 1):
        col = u**v / factorial(v)
        out[:, 2 * v - 1] = np.where(plus, col, 0.0)
        out[:, 2 * v] = np.where(minus, col, 0.0)
    return out


def _unscale(theta, p, scale):
    alpha = theta[0]
    plus = np.array([theta[2 * v - 1] / scale**v for v in range(1, p + 1)])
    minus = np.array([theta[2 * v] / scale**v for v in range(1, p + 1)])
    return alpha, plus, minus


def _independent_columns(M, start):
    """Indices (>= start) of columns of M that add rank to M[:, :start]."""
    keep = list(range(start))
    rank = np.linalg.matrix_rank(M[:, keep]) if keep else 0
    for j in range(start, M.shape[1]):
        r = np.linalg.matrix_rank(M[:, keep + [j]])
        if r > rank:
            keep.append(j)
            rank = r
    return keep[start:]


def _fit(sample, design, tau, h, p, covariates):
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    if p < 1:
        raise ValueError("polynomial order must be >= 1")
    dx = sample.x - design.x0
    wts = tricube(dx / h)
    win = wts > 0
    n_eff = int(np.count_nonzero(win))
    base = one_sided_basis(dx[win], p, h)
    k0 = base.shape[1]
    y = sample.y[win]
    w = wts[win]
    meta = {"n_effective": n_eff}
    status_extra = None
    kept = []
    if covariates:
        Wn = -sample.W[win]
        Xfull = np.hstack([base, Wn])
        kept = _independent_columns(Xfull * w[:, None], k0)
        X = np.hstack([base, Wn[:, [j - k0 for j in kept]]])
        meta["covariate_sign"] = COVARIATE_SIGN
        if len(kept) < sample.W.shape[1]:
            status_extra = DEGENERATE
            meta["gamma_unidentified"] = [
                j for j in range(sample.W.shape[1]) if j + k0 not in kept
            ]
    else:
        X = base
    if n_eff < X.shape[1]:
        raise LocalFitError(
            f"tau={tau}: {n_eff} observations in window h={h:.6g}, need {X.shape[1]}",
            tau, h, n_eff,
        )
    try:
        sol = solve_weighted_qr(CheckLossProblem(y, X, w, tau))
    except RankDeficientError as exc:
        raise LocalFitError(
            f"tau={tau}, h={h:.6g}, n_effective={n_eff}: {exc}", tau, h, n_eff
        ) from exc
    alpha, bp, bm = _unscale(sol.coefficients[:k0], p, h)
    gamma = None
    if covariates:
        gamma = np.full(sample.W.shape[1], np.nan)
        for pos, j in enumerate(kept):
            gamma[j - k0] = sol.coefficients[k0 + pos]
    status = status_extra or sol.status
    meta["objective"] = sol.objective
    return LocalPolyFit(tau, h, p, float(alpha), bp, bm, n_eff, gamma, status, meta)


def fit_local_poly(sample, design, tau, h, p=2):
    """Kernel-weighted p-th order one-sided quantile fit with common intercept.

    Coefficients are derivative estimates: column v carries ``(x - x0)^v / v!``.
    """
    return _fit(sample, design, tau, h, p, covariates=False)


def fit_local_poly_cov(sample, design, tau, h, p=2):
    """As :func:`fit_local_poly` with covariate columns appended.

    Covariate columns that are linearly dependent on the rest of the window
    design get ``gamma = nan`` and the fit is flagged degenerate.
    """
    if sample.W is None:
        raise ValueError("sample has no covariates")
    return _fit(sample, design, tau, h, p, covariates=True)


def qrkd_point(fit, design):
    numerator = float(fit.beta_plus[0] - fit.beta_minus[0])
    return QrkdEstimate(fit.tau, numerator / design.slope_jump, numerator, fit)


def pilot_global_quadratic(sample, tau, x0):
    """Unweighted global quadratic one-sided quantile fit.

    Returns ``(alpha, beta2_plus, beta2_minus)``: the level and the two
    one-sided second derivatives at ``x0``.
    """
    if sample.n < 5:
        raise ValueError("global quadratic pilot needs at least 5 observations")
    dx = sample.x - x0
    if not (np.any(dx > 0) and np.any(dx < 0)):
        raise RankDeficientError("all running-variable values lie on one side of the kink")
    scale = float(np.std(dx)) or 1.0
    X = one_sided_basis(dx, 2, scale)
    sol = solve_weighted_qr(CheckLossProblem(sample.y, X, np.ones(sample.n), tau))
    alpha, bp, bm = _unscale(sol.coefficients, 2, scale)
    return float(alpha), float(bp[1]), float(bm[1])
