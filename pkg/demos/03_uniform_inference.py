"""
Uniform tests and confidence bands
==================================

The limiting process of the estimator is simulated from uniforms drawn
independently of the outcome. Its sup over the quantile grid gives critical
values for two hypotheses: no effect anywhere, and a constant effect.
"""

# %%
from qrkd import analyze, draw_sample
from qrkd.dgp import StructureSpec

spec = StructureSpec(2)
sample = draw_sample(4000, spec, 3)
res = analyze(sample, spec.design, M=1000, seed=11)

# %%
for t in res.tests:
    label = t.kind + (" (standardized)" if t.standardized else "")
    print(f"{label:30s} stat={t.statistic:7.3f}  crit={t.critical_value:6.3f}  p={t.p_value:.3f}")

# %%
# A 95% simultaneous band. The true effect (tau) should lie inside at every
# grid point in most samples.
band = res.band
for t, lo, est, hi in zip(band.grid, band.lower, band.estimate, band.upper):
    print(f"tau={t:.2f}  [{lo:6.3f}, {hi:6.3f}]  est={est:6.3f}  covers={lo <= t <= hi}")

# %%
# Draws share one uniform vector across quantiles, so neighbouring
# quantiles are positively correlated.
import numpy as np

D = res.draws.draws
print("corr(0.45, 0.50) =", np.corrcoef(D[:, 7], D[:, 8])[0, 1].round(3))
print("pivotal SEs:", res.se.round(3))
