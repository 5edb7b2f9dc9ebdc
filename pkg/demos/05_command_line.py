"""
Command-line workflow
=====================

Write a CSV, then run each subcommand of the ``qrkd`` tool on it. The same
commands work from a shell, e.g.
``qrkd test --input data.csv --x0 0 --slope-right 1 --slope-left -1``.
"""

# %%
import json
import os
import tempfile

import numpy as np

from qrkd import cli, draw_sample

s = draw_sample(2000, 1, 4)
path = os.path.join(tempfile.mkdtemp(), "data.csv")
np.savetxt(path, np.column_stack([s.y, s.x]), delimiter=",", header="y,x", comments="")
kink = ["--input", path, "--x0", "0", "--slope-right", "1", "--slope-left", "-1"]

# %%
# Bandwidth plan as CSV (tau, h, c, flags).
cli.run(["bandwidth", *kink, "--format", "csv"])

# %%
# All four uniform tests in the versioned JSON report.
out = os.path.join(os.path.dirname(path), "tests.json")
cli.run(["test", *kink, "--draws", "500", "--output", out])
with open(out) as fh:
    report = json.load(fh)
print(report["schema_version"], report["status"])
for t in report["result"]["tests"]:
    print(t["kind"], t["standardized"], round(t["statistic"], 3), t["p_value"], t["reject"])

# %%
# Errors produce a structured report and a nonzero exit status.
status = cli.run(["estimate", "--input", path + ".missing", "--x0", "0", "--slope-right", "1", "--slope-left", "-1"])
print("exit status", status)
