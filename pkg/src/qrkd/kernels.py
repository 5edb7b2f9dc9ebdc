"""Tricube kernel and the kernel-dependent constant matrices.

Everything here is data-free. Matrices are cached per (order, side, ratio)
and returned as read-only arrays, so callers must copy before mutating.
"""

from functools import lru_cache

import numpy as np
from scipy.integrate import quad

TRICUBE_CONST = 70.0 / 81.0
QUAD_TOL = 1e-10


class KernelConfigError(ValueError):
    """Raised when a kernel-derived matrix fails its sanity checks."""


def tricube(u):
    """Tricube kernel ``70/81 (1 - |u|^3)^3`` on the open interval (-1, 1)."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    out = np.where(a < 1.0, TRICUBE_CONST * (1.0 - a**3) ** 3, 0.0)
    return out if out.ndim else float(out)


def kernel_eval(u):
    return tricube(u)


def _side_limits(side):
    if side == "plus":
        return [(0.0, 1.0)]
    if side == "minus":
        return [(-1.0, 0.0)]
    if side == "both":
        return [(-1.0, 0.0), (0.0, 1.0)]
    raise ValueError(f"side must be 'plus', 'minus' or 'both', got {side!r}")


def _quad(f, a, b):
    val, _ = quad(f, a, b, epsabs=QUAD_TOL * 1e-2, epsrel=1e-13, limit=200)
    return val


@lru_cache(maxsize=None)
def kernel_moment(j, side="both", power=1):
    """``int u^j d_side(u) K(u)^power du`` by adaptive Gauss-Kronrod quadrature.

    ``power=2`` gives the squared-kernel moments needed for variance terms.
    """
    if j < 0:
        raise ValueError("moment order must be nonnegative")
    total = 0.0
    for a, b in _side_limits(side):
        total += _quad(lambda u: u**j * tricube(u) ** power, a, b)
    return total


def roughness():
    """R(K) = int K^2."""
    return kernel_moment(0, "both", 2)


def second_moment():
    """Kernel variance sigma_K^2 = int u^2 K."""
    return kernel_moment(2, "both", 1)


def basis_vector(u, p):
    """One-sided polynomial basis ``[1, u d+, u d-, ..., u^p d+, u^p d-]``.

    Vectorised over ``u``; returns shape ``(len(u), 2p+1)`` (or ``(2p+1,)``
    for a scalar). Points exactly at zero load only on the constant.
    """
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.zeros((u.size, 2 * p + 1))
    out[:, 0] = 1.0
    plus = u > 0
    minus = u < 0
    for v in range(1, p + 1):
        uv = u**v
        out[:, 2 * v - 1] = np.where(plus, uv, 0.0)
        out[:, 2 * v] = np.where(minus, uv, 0.0)
    return out[0] if scalar else out


def _basis_index(i):
    """Map a basis position to (power, side) with side in {0, +1, -1}."""
    if i == 0:
        return 0, 0
    return (i + 1) // 2, (1 if i % 2 == 1 else -1)


def _assemble(p, moment):
    """Build ``int ubar ubar' w(u) du`` from one-sided moments ``moment(j, side)``."""
    k = 2 * p + 1
    out = np.zeros((k, k))
    for a in range(k):
        pa, sa = _basis_index(a)
        for b in range(a, k):
            pb, sb = _basis_index(b)
            if sa and sb and sa != sb:
                continue  # d+ d- = 0 pointwise
            side = sa or sb
            j = pa + pb
            if side == 0:
                val = moment(j, "both")
            else:
                val = moment(j, "plus" if side > 0 else "minus")
            out[a, b] = out[b, a] = val
    return out


def _check_pd(mat, name):
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-14):
        raise KernelConfigError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise KernelConfigError(f"{name} is not positive definite") from exc


def _freeze(mat):
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def design_matrix_N(p):
    """Kernel moment matrix ``N = int ubar ubar' K(u) du`` of size 2p+1."""
    if p < 1:
        raise ValueError("polynomial order p must be >= 1")
    mat = _assemble(p, lambda j, side: kernel_moment(j, side, 1))
    _check_pd(mat, f"N(p={p})")
    return _freeze(mat)


@lru_cache(maxsize=None)
def _cross_kernel(c1, c2, p):
    lim = min(c1, c2)
    k = 2 * p + 1
    scale = (c1 * c2) ** -0.5

    def entry(a, b, lo, hi):
        pa, _ = _basis_index(a)
        pb, _ = _basis_index(b)

        def f(u):
            return (
                (u / c1) ** pa * (u / c2) ** pb * tricube(u / c1) * tricube(u / c2)
            )

        return _quad(f, lo, hi)

    out = np.zeros((k, k))
    for a in range(k):
        _, sa = _basis_index(a)
        for b in range(k):
            _, sb = _basis_index(b)
            if sa and sb and sa != sb:
                continue
            side = sa or sb
            val = 0.0
            if side >= 0:
                val += entry(a, b, 0.0, lim)
            if side <= 0:
                val += entry(a, b, -lim, 0.0)
            out[a, b] = scale * val
    return _freeze(out)


def cross_kernel_T(tau1, tau2, c, p):
    """Cross-quantile kernel matrix

    ``(c1 c2)^{-1/2} int ubar(tau1) ubar(tau2)' K(u/c1) K(u/c2) du``

    with ``ubar(tau)`` the basis in ``u / c(tau)``. ``c`` is a callable or
    mapping giving the bandwidth ratio at each quantile.
    """
    ratio = c if callable(c) else c.__getitem__
    c1, c2 = float(ratio(tau1)), float(ratio(tau2))
    if c1 <= 0 or c2 <= 0:
        raise ValueError("bandwidth ratios must be positive")
    return _cross_kernel(c1, c2, p)


@lru_cache(maxsize=None)
def variance_matrix(p):
    """Single-bandwidth case ``int ubar ubar' K(u)^2 du``."""
    return _freeze(_assemble(p, lambda j, side: kernel_moment(j, side, 2)))
