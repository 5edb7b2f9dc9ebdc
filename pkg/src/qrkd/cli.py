"""Command-line front end: ``qrkd {estimate,test,band,bandwidth,simulate}``.

Reports are JSON (versioned, embedding the resolved configuration) or CSV.
Numbers are written with Python's shortest round-trip ``repr``.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .bandwidth import build_plan, fixed_plan
from .dgp import MonteCarloConfig, run_monte_carlo
from .local_fit import KinkDesign, Sample
from .pipeline import analyze, make_grid

SCHEMA_VERSION = "1.0"
COMMANDS = ("estimate", "test", "band", "bandwidth", "simulate")


class CsvInputError(ValueError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


def load_csv(path, y_col="y", x_col="x", covariates=None):
    """Read a headed CSV into a :class:`Sample`.

    Line numbers in errors count the header as line 1.
    """
    covariates = list(covariates or [])
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvInputError(f"{path}: empty file", line=1) from None
        wanted = [y_col, x_col] + covariates
        missing = [c for c in wanted if c not in header]
        if missing:
            raise CsvInputError(f"{path}: missing column(s) {', '.join(missing)}", line=1)
        idx = [header.index(c) for c in wanted]
        rows, bad = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            vals = []
            for name, i in zip(wanted, idx):
                try:
                    vals.append(float(rec[i]))
                except (ValueError, IndexError):
                    raise CsvInputError(
                        f"{path}: line {line}, column {name!r}: cannot parse "
                        f"{rec[i] if i < len(rec) else '<missing>'!r}",
                        line=line,
                        column=name,
                    ) from None
            if not all(math.isfinite(v) for v in vals):
                bad.append(line)
                continue
            rows.append(vals)
    if bad:
        raise CsvInputError(f"{path}: non-finite values on line(s) {bad}", line=bad[0])
    if not rows:
        raise CsvInputError(f"{path}: no data rows")
    data = np.array(rows)
    W = data[:, 2:] if covariates else None
    return Sample(data[:, 0], data[:, 1], W)


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _plain(obj):
    """Convert numpy scalars/arrays to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(r[h]) if not isinstance(r[h], str) else r[h] for h in header])
    return buf.getvalue()


def build_parser():
    ap = argparse.ArgumentParser(prog="qrkd", description="Quantile regression kink design")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--input", required=True, help="CSV file with a header row")
            p.add_argument("--x0", type=float, required=True, help="kink location")
            p.add_argument("--slope-right", type=float, required=True)
            p.add_argument("--slope-left", type=float, required=True)
            p.add_argument("--y-col", default="y")
            p.add_argument("--x-col", default="x")
            p.add_argument("--bandwidth", type=float, default=None, help="fixed bandwidth")
            p.add_argument("--covariates", default=None, help="comma-separated column names")
        p.add_argument("--tau-min", type=float, default=0.10)
        p.add_argument("--tau-max", type=float, default=0.90)
        p.add_argument("--tau-step", type=float, default=0.05)
        p.add_argument("--order", type=int, default=2, help="local polynomial order p")
        p.add_argument("--draws", type=int, default=1000, help="pivotal draws M")
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", default=None, help="report path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    helps = {
        "estimate": "QRKD estimates with standard errors over the tau grid",
        "test": "uniform significance and heterogeneity tests",
        "band": "uniform confidence band",
        "bandwidth": "bandwidth plan only",
    }
    for name, text in helps.items():
        common(sub.add_parser(name, help=text))
    sim = sub.add_parser("simulate", help="Monte Carlo study of the simulation designs")
    common(sim, data=False)
    sim.add_argument("--structure", default="1", help="comma-separated structures (0,1,2)")
    sim.add_argument("--n", default="1000,2000,4000", help="comma-separated sample sizes")
    sim.add_argument("--replications", type=int, default=200)
    sim.add_argument("--jobs", type=int, default=1, help="parallel workers")
    sim.add_argument("--no-tests", action="store_true", help="skip the uniform tests")
    return ap


def resolved_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("output", "jobs")}
    cfg["grid"] = list(make_grid(args.tau_min, args.tau_max, args.tau_step))
    return cfg


def _validate(args):
    if not 0 < args.level < 1:
        raise ValueError("level must lie in (0, 1)")
    if args.order < 1:
        raise ValueError("order must be >= 1")
    if args.draws < 2:
        raise ValueError("need at least two pivotal draws")


def _data_command(args, grid):
    covs = [c.strip() for c in args.covariates.split(",")] if args.covariates else []
    sample = load_csv(args.input, args.y_col, args.x_col, covs)
    design = KinkDesign(args.x0, args.slope_right, args.slope_left)
    if args.command == "bandwidth":
        if args.bandwidth is not None:
            plan = fixed_plan(grid, args.bandwidth)
        else:
            plan = build_plan(sample, design, grid)
        d = plan.to_dict()
        return {"bandwidth_plan": d}, (["tau", "h", "c", "flags"], [
            r | {"flags": ";".join(r["flags"])} for r in d["per_tau"]
        ])
    if covs and args.command != "estimate":
        raise ValueError("inference is not available for the covariate model")
    res = analyze(
        sample, design, grid, p=args.order, M=args.draws, seed=args.seed,
        level=args.level, bandwidth=args.bandwidth, inference=not covs, covariates=bool(covs),
    )
    per_tau = []
    for i, (t, e) in enumerate(zip(grid, res.estimates)):
        row = {"tau": t, "h": res.plan.h(t), "estimate": e.value,
               "se": None, "lower": None, "upper": None}
        if res.band is not None:
            row.update(se=res.se[i], lower=res.band.lower[i], upper=res.band.upper[i])
        if covs:
            row["gamma"] = e.fit.gamma
            row["status"] = e.fit.status
        per_tau.append(row)
    if args.command == "estimate":
        out = {"estimates": per_tau, "bandwidth_plan": res.plan.to_dict()}
        if covs:
            out["covariate_sign"] = res.fits[0].meta["covariate_sign"]
        else:
            out["band"] = res.band.to_dict()
        return out, (["tau", "h", "estimate", "se", "lower", "upper"], per_tau)
    if args.command == "test":
        tests = [t.to_dict() for t in res.tests]
        return {"tests": tests, "estimates": per_tau}, (
            ["kind", "standardized", "statistic", "critical_value", "p_value", "level", "reject"],
            tests,
        )
    band = res.band.to_dict()
    rows = [
        {"tau": t, "estimate": band["estimate"][i], "lower": band["lower"][i], "upper": band["upper"][i]}
        for i, t in enumerate(grid)
    ]
    return {"band": band}, (["tau", "estimate", "lower", "upper"], rows)


def _simulate(args, grid):
    reports, rows = [], []
    for s in (int(v) for v in args.structure.split(",")):
        for n in (int(v) for v in args.n.split(",")):
            cfg = MonteCarloConfig(
                s, n, args.replications, grid, args.level, args.seed,
                not args.no_tests, args.order, args.draws,
            )
            rep = run_monte_carlo(cfg, n_jobs=args.jobs)
            reports.append(rep.to_dict())
            rows.extend(rep.rows())
    return {"monte_carlo": reports}, (["structure", "n", "tau", "abs_bias", "sd", "rmse"], rows)


def run(argv=None, stdout=None):
    """Parse ``argv``, execute, write the report; returns the exit status."""
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    report = {"schema_version": SCHEMA_VERSION, "command": args.command}
    status = 0
    table = None
    try:
        _validate(args)
        grid = make_grid(args.tau_min, args.tau_max, args.tau_step)
        report["config"] = resolved_config(args)
        if args.command == "simulate":
            result, table = _simulate(args, grid)
        else:
            result, table = _data_command(args, grid)
        report["status"] = "ok"
        report["result"] = result
    except Exception as exc:  # every module error becomes a structured report
        status = 1
        report.setdefault("config", {k: v for k, v in sorted(vars(args).items())})
        report["status"] = "error"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("line", "column", "tau", "h", "n_effective"):
            if getattr(exc, attr, None) is not None:
                report["error"][attr] = getattr(exc, attr)
    if args.format == "csv" and status == 0:
        text = _csv(*table)
    else:
        text = json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    if status and args.output:
        sys.stderr.write(f"qrkd: {report['error']['type']}: {report['error']['message']}\n")
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
