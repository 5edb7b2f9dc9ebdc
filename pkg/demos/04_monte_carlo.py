"""
A small Monte Carlo study
=========================

Bias, SD and RMSE of the estimator under the homogeneous design, plus how
often each uniform test accepts. Use R = 200 or more for stable numbers;
the value here keeps the script quick.
"""

# %%
from qrkd import MonteCarloConfig, run_monte_carlo

for n in (1000, 4000):
    cfg = MonteCarloConfig(structure=1, n=n, replications=20, grid=(0.25, 0.5, 0.75), M=300, seed=0)
    rep = run_monte_carlo(cfg)
    print(f"n={n}  ({rep.timing:.1f}s)")
    for row in rep.rows():
        print(f"  tau={row['tau']:.2f}  |bias|={row['abs_bias']:.3f}  sd={row['sd']:.3f}  rmse={row['rmse']:.3f}")
    print("  acceptance", {k: round(v, 2) for k, v in rep.acceptance.items()})

# %%
# Replications use independent random substreams, so running them on
# several workers gives the same report.
a = run_monte_carlo(MonteCarloConfig(0, 500, replications=4, grid=(0.4, 0.6), M=100))
b = run_monte_carlo(MonteCarloConfig(0, 500, replications=4, grid=(0.4, 0.6), M=100), n_jobs=2)
print("identical:", a.to_dict() == b.to_dict())
