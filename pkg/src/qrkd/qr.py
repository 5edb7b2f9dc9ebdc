"""Weighted check-loss minimisation.

The solver works on the dual of the quantile regression LP with a
Frisch-Newton primal-dual interior point iteration (Mehrotra predictor /
corrector), then purifies the iterate to a vertex of the LP: the k
observations with smallest residuals are interpolated exactly and the
vertex is accepted only when it carries a dual optimality certificate.
Weights enter by scaling rows, since ``w * rho(r) = rho(w * r)`` for w >= 0.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

OPTIMAL = "optimal"
DEGENERATE = "degenerate-optimal"


class RankDeficientError(ValueError):
    """Positively weighted rows do not span the column space."""


class ConvergenceError(RuntimeError):
    """Interior point iteration stopped before reaching the gap tolerance."""

    def __init__(self, message, iterate, gap):
        super().__init__(message)
        self.iterate = iterate
        self.gap = gap


@dataclass(frozen=True)
class CheckLossProblem:
    responses: np.ndarray
    design: np.ndarray
    weights: np.ndarray
    tau: float

    def __post_init__(self):
        y = np.asarray(self.responses, dtype=float)
        X = np.asarray(self.design, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "weights", w)
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie strictly inside (0, 1), got {self.tau}")
        n, k = X.shape
        if y.shape != (n,) or w.shape != (n,):
            raise ValueError("responses, design rows and weights must have equal length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("responses and design must be finite")
        if np.count_nonzero(w > 0) < k:
            raise RankDeficientError(
                f"only {np.count_nonzero(w > 0)} positively weighted rows for {k} coefficients"
            )


@dataclass(frozen=True)
class QrSolution:
    coefficients: np.ndarray
    objective: float
    status: str
    iterations: int = 0


def check_loss(u, tau):
    """rho_tau(u) = u (tau - 1{u < 0})."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def weighted_objective(beta, problem):
    r = problem.responses - problem.design @ beta
    return float(np.sum(problem.weights * check_loss(r, problem.tau)))


def _step_length(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1e20
    return float(np.min(-v[neg] / dv[neg]))


def _solve_normal(AQ, rhs):
    # AQ is k x n; solve (AQ AQ') dy = AQ rhs
    G = AQ @ AQ.T
    g = AQ @ rhs
    try:
        c, low = linalg.cho_factor(G, check_finite=False)
        return linalg.cho_solve((c, low), g, check_finite=False)
    except linalg.LinAlgError:
        return np.linalg.lstsq(AQ.T, rhs, rcond=None)[0]


def _frisch_newton(X, y, tau, tol, max_iter=100, beta_step=0.99995):
    """Interior point on max y'a s.t. X'a = (1-tau) X'1, 0 <= a <= 1.

    Returns primal coefficients (the dual variables of this problem), the
    final duality gap and the iteration count.
    """
    n, k = X.shape
    A = X.T
    c = -y
    b = (1.0 - tau) * X.sum(axis=0)
    u = np.ones(n)
    x = np.full(n, 1.0 - tau)
    s = u - x
    dual = np.linalg.lstsq(A.T, c, rcond=None)[0]
    r = c - A.T @ dual
    r = r + 0.001 * (r == 0)
    z = np.where(r > 0, r, 0.0)
    w = z - r
    gap = c @ x - dual @ b + w @ u
    scale = 1.0 + np.abs(y).sum()
    it = 0
    while gap > tol * scale and it < max_iter:
        it += 1
        last = dual
        q = 1.0 / (z / x + w / s)
        r = z - w
        Q = np.sqrt(q)
        AQ = A * Q
        rhs = Q * r
        dy = _solve_normal(AQ, rhs)
        dx = q * (A.T @ dy - r)
        ds = -dx
        dz = -z * (dx / x + 1.0)
        dw = -w * (ds / s + 1.0)
        fp = min(beta_step * min(_step_length(x, dx), _step_length(s, ds)), 1.0)
        fd = min(beta_step * min(_step_length(w, dw), _step_length(z, dz)), 1.0)
        if min(fp, fd) < 1.0:
            mu = z @ x + w @ s
            g = (z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s + fp * ds)
            mu = mu * (g / mu) ** 3 / (2.0 * n)
            dxdz = dx * dz
            dsdw = ds * dw
            xinv = 1.0 / x
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            rhs = rhs + Q * (dxdz - dsdw - xi)
            dy = _solve_normal(AQ, rhs)
            dx = q * (A.T @ dy + xi - r - dxdz + dsdw)
            ds = -dx
            dz = mu * xinv - z - xinv * z * dx - dxdz
            dw = mu * sinv - w - sinv * w * ds - dsdw
            fp = min(beta_step * min(_step_length(x, dx), _step_length(s, ds)), 1.0)
            fd = min(beta_step * min(_step_length(w, dw), _step_length(z, dz)), 1.0)
        x = x + fp * dx
        s = s + fp * ds
        dual = dual + fd * dy
        w = w + fd * dw
        z = z + fd * dz
        gap = c @ x - dual @ b + w @ u
        if not np.isfinite(gap):
            return -last, np.inf, it, False
    return -dual, float(gap), it, gap <= tol * scale


def _pick_basis(X, order, k):
    """Greedy: first k rows in ``order`` that are linearly independent."""
    chosen = []
    Qb = np.zeros((0, X.shape[1]))
    scale = np.max(np.abs(X)) + 1.0
    for i in order:
        row = X[i]
        resid = row - Qb.T @ (Qb @ row) if len(chosen) else row.copy()
        nrm = np.linalg.norm(resid)
        if nrm > 1e-9 * scale:
            chosen.append(i)
            Qb = np.vstack([Qb, resid / nrm])
            if len(chosen) == k:
                break
    return np.array(chosen, dtype=int)


def _multipliers(X, y, tau, basis, beta, zero_tol):
    """Basic dual multipliers a with X_B' a = -sum_nonbasic X_i psi_i.

    Nonbasic ties (zero residuals) are treated as nonnegative residuals.
    """
    r = y - X @ beta
    nonbasic = np.ones(len(y), dtype=bool)
    nonbasic[basis] = False
    psi = tau - (r[nonbasic] < -zero_tol)
    g = X[nonbasic].T @ psi
    return np.linalg.solve(X[basis].T, -g), r


def _simplex_polish(X, y, tau, basis, zero_tol, max_pivots):
    """Exchange basis rows until the vertex carries a dual certificate.

    Each pivot moves along the edge that frees the basic observation with
    the most violated multiplier, stopping at the weighted-median breakpoint
    of the piecewise linear objective.
    """
    basis = np.array(basis, dtype=int)
    for pivot in range(max_pivots + 1):
        XB = X[basis]
        beta = np.linalg.solve(XB, y[basis])
        a, r = _multipliers(X, y, tau, basis, beta, zero_tol)
        over = a - tau
        under = (tau - 1.0) - a
        viol = np.maximum(over, under)
        j = int(np.argmax(viol))
        if viol[j] <= 1e-10:
            edge = np.any(np.abs(over) < 1e-9) or np.any(np.abs(under) < 1e-9)
            return beta, basis, True, bool(edge), pivot
        sigma = 1.0 if over[j] > 0 else -1.0
        slope = -viol[j]
        e = np.zeros(len(basis))
        e[j] = -sigma
        d = np.linalg.solve(XB, e)
        xd = X @ d
        mask = np.ones(len(y), dtype=bool)
        mask[basis] = False
        rr = np.where(np.abs(r) <= zero_tol, 0.0, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = rr / xd
        cand = mask & (xd != 0) & ((t > 0) | ((t == 0) & (rr == 0) & (xd > 0)))
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            return beta, basis, False, False, pivot  # unbounded direction cannot occur at an optimum
        idx = idx[np.lexsort((idx, t[idx]))]
        cum = slope + np.cumsum(np.abs(xd[idx]))
        enter = idx[int(np.searchsorted(cum, 0.0, side="left"))] if cum[-1] >= 0 else idx[-1]
        basis = basis.copy()
        basis[j] = enter
    return beta, basis, False, False, max_pivots


def solve_weighted_qr(problem, tol=1e-9, max_iter=100, max_pivots=None):
    """Minimise ``sum_i w_i rho_tau(y_i - X_i b)`` over b.

    Zero-weight rows are dropped first. Returns a :class:`QrSolution` whose
    status is ``"degenerate-optimal"`` when the argmin may not be unique
    (a dual multiplier on its bound, or more than k zero residuals).
    """
    keep = problem.weights > 0
    w = problem.weights[keep]
    Xw = problem.design[keep] * w[:, None]
    yw = problem.responses[keep] * w
    n, k = Xw.shape
    rank = np.linalg.matrix_rank(Xw)
    if rank < k:
        raise RankDeficientError(f"weighted design of {n} rows has rank {rank} < {k}")
    beta_ip, gap, it, converged = _frisch_newton(Xw, yw, problem.tau, 1e-8, max_iter)
    if not np.all(np.isfinite(beta_ip)):
        beta_ip = np.linalg.lstsq(Xw, yw, rcond=None)[0]
    r = yw - Xw @ beta_ip
    order = np.argsort(np.abs(r), kind="stable")
    basis = _pick_basis(Xw, order, k)
    zero_tol = 1e-12 * (1.0 + np.abs(yw).max())
    if max_pivots is None:
        max_pivots = 50 + 10 * n
    beta, basis, certified, edge, pivots = _simplex_polish(
        Xw, yw, problem.tau, basis, zero_tol, max_pivots
    )
    if not certified:
        obj_v = float(np.sum(check_loss(yw - Xw @ beta, problem.tau)))
        obj_ip = float(np.sum(check_loss(yw - Xw @ beta_ip, problem.tau)))
        if not converged:
            raise ConvergenceError(
                f"no certified vertex after {pivots} pivots; interior point gap {gap:.3e}",
                beta_ip,
                gap,
            )
        if obj_ip < obj_v:
            beta = beta_ip
        return QrSolution(beta, weighted_objective(beta, problem), DEGENERATE, it)
    n_zero = int(np.count_nonzero(np.abs(yw - Xw @ beta) <= zero_tol))
    status = DEGENERATE if (edge or n_zero > k) else OPTIMAL
    return QrSolution(beta, weighted_objective(beta, problem), status, it)
