import numpy as np
import pytest
from scipy.stats import norm

from qrkd import bandwidth as bw
from qrkd.dgp import StructureSpec, draw_sample, structural_quantile
from qrkd.local_fit import KinkDesign, Sample, pilot_global_quadratic
from test_kernels import closed_moment

KINK = KinkDesign(0.0, 1.0, -1.0)
MU2 = closed_moment(2, "both")
RK = closed_moment(0, "both", 2)


def test_silverman_pure_constant():
    const = MU2**-0.4 * RK**0.2 * (3 / (8 * np.sqrt(np.pi))) ** -0.2
    assert bw.silverman_rule(1.0, 1) == pytest.approx(const, rel=1e-12)


def test_silverman_rate_law():
    assert bw.silverman_rule(1.3, 2000) / bw.silverman_rule(1.3, 1000) == pytest.approx(2**-0.2, rel=1e-14)


def test_silverman_on_sample():
    rng = np.random.default_rng(0)
    x = rng.normal(size=1000)
    expected = MU2**-0.4 * RK**0.2 * (3 / (8 * np.sqrt(np.pi)) * np.std(x, ddof=1) ** -5) ** -0.2 * 1000**-0.2
    assert bw.silverman_fx_bandwidth(Sample(x, x)) == pytest.approx(expected, rel=1e-12)


def test_silverman_zero_variance():
    with pytest.raises(bw.ZeroVarianceError):
        bw.silverman_fx_bandwidth(Sample(np.arange(5.0), np.ones(5)))


def test_bh_v_constant():
    assert bw.bh_v(1.0, 1.0, 0.0) == pytest.approx(0.95 * np.sqrt(2 * np.pi) * 8 - 32 * np.exp(-2), rel=1e-14)


def bh_oracle(sx, sy, d, n):
    """Term-by-term re-evaluation of the reference rule."""
    d = abs(d)
    v = 0.95 * (2 * np.pi) ** 0.5 * sx**3 * (3 * d * d * sx * sx + 8 * sy * sy) - 32 * sx * sx * sy * sy * np.exp(-2)
    top = 32 * RK**2 * sy**5 * (260 * np.pi**9 * sx**58) ** (1 / 8)
    bottom = n * MU2**2 * d ** (5 / 2) * v ** (3 / 4) * (v**0.5 + d * (16.25 * np.pi * sx**10) ** 0.25)
    hx = (top / bottom) ** (1 / 6)
    hy = (d * d * v / (2.85 * (2 * np.pi) ** 0.5 * sx**5)) ** 0.25 * hx
    return hy, hx


def test_bh_transcription():
    rng = np.random.default_rng(1)
    z = rng.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1.5]], size=800)
    s = Sample(z[:, 1], z[:, 0])
    hy, hx, fb = bw.bh_conditional_bandwidths(s)
    ohy, ohx = bh_oracle(np.std(s.x, ddof=1), np.std(s.y, ddof=1), bw.ols_slope(s.x, s.y), 800)
    assert not fb
    assert hy == pytest.approx(ohy, rel=1e-12) and hx == pytest.approx(ohx, rel=1e-12)


def test_bh_negative_slope_uses_magnitude():
    assert bw.bh_rule(1.0, 1.0, -0.7, 500) == bw.bh_rule(1.0, 1.0, 0.7, 500)


def test_bh_fallback_when_undefined():
    assert bw.bh_rule(1.0, 1.0, 0.0, 100) is None
    x = np.linspace(-1, 1, 101)
    y = np.cos(7 * x)  # symmetric, OLS slope exactly 0
    s = Sample(y, x)
    hy, hx, fb = bw.bh_conditional_bandwidths(s)
    assert fb
    assert hx == pytest.approx(bw.silverman_rule(np.std(x, ddof=1), 101))
    assert hy == pytest.approx(bw.silverman_rule(np.std(y, ddof=1), 101))


def test_kde_fx():
    s = Sample([1.0], [0.3])
    assert bw.kde_fx(s, 0.5, 0.3) == pytest.approx(70 / 81 / 0.5)
    s = Sample(np.ones(3), np.array([2.0, 3.0, -4.0]))
    assert bw.kde_fx(s, 1.0, 0.0) == 0.0
    rng = np.random.default_rng(2)
    x = rng.normal(size=4000)
    s = Sample(x, x)
    assert bw.kde_fx(s, bw.silverman_fx_bandwidth(s), 0.0) == pytest.approx(norm.pdf(0), abs=0.05)


def test_cond_density_simple_cases():
    s = Sample(np.full(5, 2.0), np.linspace(-0.1, 0.1, 5))
    assert bw.cond_density_fyx(s, 0.4, 0.5, 2.0, 0.0) == pytest.approx(70 / 81 / 0.4)
    assert bw.cond_density_fyx(s, 0.4, 0.5, 3.0, 0.0) == 0.0
    with pytest.raises(bw.EmptyWindowError):
        bw.cond_density_fyx(s, 0.4, 0.01, 2.0, 5.0)


def test_cond_density_structure1():
    spec = StructureSpec(1)
    s = draw_sample(4000, 1, 11)
    y0 = float(structural_quantile(1, 0.5, 0.0))
    truth = norm.pdf(0) / spec.cond_sd
    # moderate bandwidths; the reference rule oversmooths this design
    est = bw.cond_density_fyx(s, 0.1, 0.15, y0, 0.0)
    assert est == pytest.approx(truth, rel=0.1)


def test_zero_curvature_is_capped():
    assert bw.curvature_constant(0.0, 0.0) == 0.0
    x = np.linspace(-1, 1, 201)
    s = Sample(x + 0.01 * np.sin(40 * x), x)
    pilots = bw.density_pilots(s, KINK)
    res = bw.mse_optimal_bandwidth(s, 0.5, KINK, pilots, pilot_fit=(0.0, 0.0, 0.0))
    assert res.h == bw.max_bandwidth(s)
    assert bw.FLAG_CURVATURE in res.flags


def mse_oracle(s, tau):
    """Step-by-step evaluation of the MSE-optimal rule with closed-form moments."""
    m = lambda j, side: closed_moment(j, side)
    N1 = np.array([
        [m(0, "both"), m(1, "plus"), m(1, "minus")],
        [m(1, "plus"), m(2, "plus"), 0.0],
        [m(1, "minus"), 0.0, m(2, "minus")],
    ])
    k2 = lambda j, side: closed_moment(j, side, 2)
    T1 = np.array([
        [k2(0, "both"), k2(1, "plus"), k2(1, "minus")],
        [k2(1, "plus"), k2(2, "plus"), 0.0],
        [k2(1, "minus"), 0.0, k2(2, "minus")],
    ])
    alpha, b2p, b2m = pilot_global_quadratic(s, tau, 0.0)
    j = np.array([0.0, 1.0, -1.0])
    vec = np.array([b2p * m(2, "plus") + b2m * m(2, "minus"), b2p * m(3, "plus"), b2m * m(3, "minus")])
    c1 = j @ np.linalg.inv(N1) @ vec / 2
    sx, sy = np.std(s.x, ddof=1), np.std(s.y, ddof=1)
    hx = MU2**-0.4 * RK**0.2 * (3 / (8 * np.sqrt(np.pi)) * sx**-5) ** -0.2 * s.n**-0.2
    fx = np.sum(70 / 81 * np.clip(1 - np.abs(s.x / hx) ** 3, 0, None) ** 3) / (s.n * hx)
    xc = s.x - s.x.mean()
    d = xc @ (s.y - s.y.mean()) / (xc @ xc)
    hy_bar, hx_bar = bh_oracle(sx, sy, d, s.n)
    kx = 70 / 81 * np.clip(1 - np.abs(s.x / hx_bar) ** 3, 0, None) ** 3
    ky = 70 / 81 * np.clip(1 - np.abs((s.y - alpha) / hy_bar) ** 3, 0, None) ** 3 / hy_bar
    fyx = kx @ ky / kx.sum()
    Ni = np.linalg.inv(N1)
    c2 = tau * (1 - tau) * (j @ Ni @ T1 @ Ni @ j) / (fx * fyx**2)
    return (1.5 * c2 / c1**2) ** 0.2 * s.n**-0.2, c1, c2


def test_mse_rule_transcription():
    s = draw_sample(1500, 1, 21)
    pilots = bw.density_pilots(s, KINK)
    res = bw.mse_optimal_bandwidth(s, 0.5, KINK, pilots)
    h, c1, c2 = mse_oracle(s, 0.5)
    assert res.c1 == pytest.approx(c1, rel=1e-8)
    assert res.c2 == pytest.approx(c2, rel=1e-8)
    assert res.h == pytest.approx(h, rel=1e-6)


def test_variance_constant_positive():
    for tau in (0.1, 0.5, 0.9):
        assert bw.variance_constant(tau, 0.3, 0.8) > 0


def test_rate_law_fixed_constants():
    assert bw.optimal_rule(0.2, 0.5, 4000) / bw.optimal_rule(0.2, 0.5, 2000) == pytest.approx(2**-0.2, rel=1e-14)


def test_single_point_plan():
    s = draw_sample(500, 1, 3)
    plan = bw.build_plan(s, KINK, (0.5,))
    assert plan.c_of_tau == {0.5: 1.0}


def test_all_degenerate_plan():
    hs = [2.0, 2.0, 2.0]
    plan = bw.plan_from_bandwidths((0.2, 0.5, 0.8), hs, flags=[(bw.FLAG_CURVATURE,)] * 3)
    assert all(c == 1.0 for c in plan.c_of_tau.values())
    assert all(h == 2.0 for h in plan.h_per_tau.values())


def test_clipping():
    plan = bw.plan_from_bandwidths((0.1, 0.5, 0.9), [0.01, 1.0, 100.0])
    assert plan.c_of_tau[0.1] == 0.2 and plan.c_of_tau[0.9] == 5.0
    assert bw.FLAG_CLIP_LOW in plan.caps_applied[0.1]
    assert bw.FLAG_CLIP_HIGH in plan.caps_applied[0.9]
    assert plan.base_h == 1.0


def test_plan_invariants_and_determinism():
    s = draw_sample(2000, 2, 42)
    grid = tuple(np.round(np.arange(0.1, 0.91, 0.1), 2))
    a = bw.build_plan(s, KINK, grid)
    b = bw.build_plan(draw_sample(2000, 2, 42), KINK, grid)
    assert a.h_per_tau == b.h_per_tau and a.c_of_tau == b.c_of_tau
    for t in grid:
        assert a.h(t) > 0
        assert 0.2 <= a.c_of_tau[t] <= 5.0
        assert a.details[t].c2 > 0


def test_plan_rejects_bad_grid():
    with pytest.raises(ValueError):
        bw.plan_from_bandwidths((), [])
    with pytest.raises(ValueError):
        bw.plan_from_bandwidths((0.0, 0.5), [1.0, 1.0])


def test_plan_serialises():
    s = draw_sample(500, 0, 1)
    d = bw.build_plan(s, KINK, (0.25, 0.5)).to_dict()
    assert set(d) == {"base_h", "per_tau", "pilots"}
    assert set(d["per_tau"][0]) == {"tau", "h", "c", "flags"}
