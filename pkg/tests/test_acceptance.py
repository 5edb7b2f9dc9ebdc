"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The Monte Carlo cells (R = 200) are computed once per session and shared;
the whole module takes several minutes on one core.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from oracles import lp_check_loss
from qrkd import kernels
from qrkd.bandwidth import FLAG_CAP, FLAG_CURVATURE, build_plan
from qrkd.dgp import MonteCarloConfig, draw_sample, run_monte_carlo, structural_quantile, true_qrkd
from qrkd.inference import simulate_pivotal
from qrkd.local_fit import KinkDesign, Sample
from qrkd.pipeline import DEFAULT_GRID, fit_grid
from qrkd.qr import CheckLossProblem, solve_weighted_qr

KINK = KinkDesign(0.0, 1.0, -1.0)
R = 200
_CELLS = {}


def cell(structure, n):
    key = (structure, n)
    if key not in _CELLS:
        _CELLS[key] = run_monte_carlo(MonteCarloConfig(structure, n, replications=R, seed=0))
    return _CELLS[key]


def test_1_solver_oracle(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(5, 21))
        k = int(rng.integers(1, 5))
        tau = (0.1, 0.5, 0.9)[i % 3]
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
        y = X @ rng.normal(size=k) + rng.standard_cauchy(n)
        w = rng.uniform(0, 2, size=n)
        w[rng.random(n) < 0.1] = 0.0
        if np.count_nonzero(w) < k or np.linalg.matrix_rank(X[w > 0]) < k:
            w = np.ones(n)
        sol = solve_weighted_qr(CheckLossProblem(y, X, w, tau))
        _, obj = lp_check_loss(y, X, w, tau)
        worst = max(worst, abs(sol.objective - obj))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    criterion(1, ok, f"max |objective - LP| = {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_2_kernel_exactness(criterion):
    m0 = kernels.kernel_moment(0, "both")
    m1 = kernels.kernel_moment(1, "both")
    N = kernels.design_matrix_N(2)
    cross_zero = all(N[a, b] == 0.0 for a in range(1, 5) for b in range(1, 5) if a % 2 != b % 2)
    ok = (
        abs(m0 - 1) < 1e-10
        and abs(m1) < 1e-10
        and np.array_equal(N, N.T)
        and np.all(np.linalg.eigvalsh(N) > 0)
        and cross_zero
    )
    criterion(2, ok, f"int K - 1 = {m0 - 1:.1e}, int uK = {m1:.1e}, min eig N = {np.linalg.eigvalsh(N).min():.3e}")
    assert ok


def test_3_identification_oracle(criterion):
    start = time.perf_counter()
    step = 1e-5
    worst = 0.0
    for s in (0, 1, 2):
        for t in np.round(np.arange(0.1, 0.91, 0.1), 2):
            q0 = structural_quantile(s, t, 0.0)
            right = (structural_quantile(s, t, step) - q0) / step
            left = (q0 - structural_quantile(s, t, -step)) / step
            worst = max(worst, abs((right - left) / KINK.slope_jump - true_qrkd(s, t)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 1
    criterion(3, ok, f"max Wald-ratio error = {worst:.2e}, {elapsed:.3f}s")
    assert ok


@pytest.mark.slow
def test_4_table1_structure1(criterion):
    start = time.perf_counter()
    a, b = cell(1, 1000), cell(1, 4000)
    i = DEFAULT_GRID.index(0.5)
    ok = (
        a.abs_bias[i] <= 0.05
        and b.abs_bias[i] <= 0.05
        and 0.09 <= a.sd[i] <= 0.27
        and 0.065 <= b.sd[i] <= 0.195
        and np.all(b.rmse < a.rmse)
    )
    criterion(4, ok, (
        f"tau=0.5 |bias| {a.abs_bias[i]:.3f}/{b.abs_bias[i]:.3f}, SD {a.sd[i]:.3f}/{b.sd[i]:.3f} "
        f"(n=1000/4000), RMSE decreasing at {int(np.sum(b.rmse < a.rmse))}/{len(DEFAULT_GRID)} tau, "
        f"{time.perf_counter() - start:.0f}s"
    ))
    assert ok


@pytest.mark.slow
def test_5_structure2_shape(criterion):
    r = cell(2, 4000)
    rho = spearmanr(DEFAULT_GRID, r.mean).statistic
    errs = [abs(r.mean[DEFAULT_GRID.index(t)] - t) for t in (0.3, 0.5, 0.7)]
    ok = rho > 0.9 and max(errs) <= 0.1
    criterion(5, ok, f"Spearman {rho:.3f}, |mean - tau| at 0.3/0.5/0.7 = " + "/".join(f"{e:.3f}" for e in errs))
    assert ok


@pytest.mark.slow
def test_6_test_size(criterion):
    s0 = cell(0, 2000).acceptance
    s1 = cell(1, 2000).acceptance
    vals = [s0["WS"], s0["WS_std"], s1["WH"], s1["WH_std"]]
    ok = all(0.90 <= v <= 0.99 for v in vals)
    criterion(6, ok, f"S0 WS/WS_std acceptance {s0['WS']:.3f}/{s0['WS_std']:.3f}; "
                     f"S1 WH/WH_std acceptance {s1['WH']:.3f}/{s1['WH_std']:.3f}")
    assert ok


@pytest.mark.slow
def test_7_test_power(criterion):
    rej = lambda r, k: 1 - r.acceptance[k]
    a, b = cell(1, 1000), cell(1, 4000)
    c, d = cell(2, 1000), cell(2, 4000)
    sig = [(rej(a, k), rej(b, k)) for k in ("WS", "WS_std")]
    het = [(rej(c, k), rej(d, k)) for k in ("WH", "WH_std")]
    ok = all(hi > lo and hi > 0.9 for lo, hi in sig) and all(hi > lo and hi > 0.8 for lo, hi in het)
    criterion(7, ok, "S1 WS/WS_std rejection n=1000->4000 "
              + ", ".join(f"{lo:.3f}->{hi:.3f}" for lo, hi in sig)
              + "; S2 WH/WH_std " + ", ".join(f"{lo:.3f}->{hi:.3f}" for lo, hi in het))
    assert ok


def test_8_pivotal_zero_mean(criterion):
    s = draw_sample(2000, 1, 8)
    plan = build_plan(s, KINK, DEFAULT_GRID)
    fits, _ = fit_grid(s, KINK, plan)
    d = simulate_pivotal(s, KINK, plan, fits, M=2000, seed=8)
    z = np.abs(d.draws.mean(axis=0)) / (d.draws.std(axis=0, ddof=1) / np.sqrt(d.M))
    ok = np.all(z <= 3)
    criterion(8, ok, f"max |mean| / (SD/sqrt(M)) = {z.max():.2f} over {len(DEFAULT_GRID)} tau")
    assert ok


def _cli(args, threads):
    env = dict(os.environ, OMP_NUM_THREADS=str(threads), OPENBLAS_NUM_THREADS=str(threads),
               MKL_NUM_THREADS=str(threads))
    out = subprocess.run([sys.executable, "-m", "qrkd", *args], capture_output=True, env=env, check=True)
    return out.stdout


def test_9_determinism(criterion, tmp_path):
    s = draw_sample(600, 2, 9)
    path = tmp_path / "data.csv"
    np.savetxt(path, np.column_stack([s.y, s.x]), delimiter=",", header="y,x", comments="", fmt="%.17g")
    data = ["--input", str(path), "--x0", "0", "--slope-right", "1", "--slope-left", "-1",
            "--draws", "100", "--seed", "5", "--tau-step", "0.1"]
    runs = {
        "estimate": ["estimate", *data],
        "test": ["test", *data],
        "band": ["band", *data, "--format", "csv"],
        "bandwidth": ["bandwidth", *data],
        "simulate": ["simulate", "--structure", "1,2", "--n", "400", "--replications", "4",
                     "--draws", "50", "--tau-step", "0.2"],
    }
    same = {}
    for name, args in runs.items():
        outs = [_cli(args, 1), _cli(args, 1), _cli(args, 4)]
        if name == "simulate":
            outs.append(_cli([*args, "--jobs", "2"], 2))
        same[name] = all(o == outs[0] for o in outs[1:])
    ok = all(same.values()) and json.loads(_cli(runs["test"], 1))["status"] == "ok"
    criterion(9, ok, "byte-identical: " + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in same.items()))
    assert ok


def test_10_bandwidth_rate_law(criterion):
    s = draw_sample(1500, 1, 10)
    dup = Sample(np.concatenate([s.y, s.y]), np.concatenate([s.x, s.x]))
    a = build_plan(s, KINK, DEFAULT_GRID)
    b = build_plan(dup, KINK, DEFAULT_GRID, pilots=a.pilots)
    worst, used = 0.0, 0
    for t in DEFAULT_GRID:
        ha, hb = a.details[t], b.details[t]
        if {FLAG_CAP, FLAG_CURVATURE} & (set(ha.flags) | set(hb.flags)):
            continue
        used += 1
        worst = max(worst, abs(hb.h / ha.h / 2**-0.2 - 1))
    ok = used > 0 and worst <= 1e-12
    criterion(10, ok, f"max relative deviation from 2^(-1/5) = {worst:.1e} over {used} uncapped tau")
    assert ok
