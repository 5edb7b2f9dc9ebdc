"""Simulation designs with a kink at zero and the Monte Carlo harness.

Running variable and error are bivariate normal; the policy is
``b(x) = |x|`` and the outcome is ``g(b, x, e) = k(e) b + x + 0.1 x^2 + e``
with treatment coefficient ``k`` equal to 0, 0.5 or the conditional CDF of
``e`` given ``x = 0`` for structures 0, 1 and 2.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from ._random import substream
from .local_fit import KinkDesign, Sample
from .pipeline import DEFAULT_GRID, analyze
from .qr import ConvergenceError, RankDeficientError

TEST_NAMES = ("WS", "WS_std", "WH", "WH_std")


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class StructureSpec:
    id: int
    sigma_x: float = 1.0
    sigma_eps: float = 0.5
    rho: float = 0.5
    x0: float = 0.0

    def __post_init__(self):
        if self.id not in (0, 1, 2):
            raise ValueError(f"unknown structure {self.id}")
        if not abs(self.rho) < 1:
            raise ValueError("correlation must lie in (-1, 1)")

    @property
    def design(self):
        return KinkDesign(self.x0, 1.0, -1.0)

    @property
    def cond_sd(self):
        """SD of the error given the running variable."""
        return self.sigma_eps * np.sqrt(1 - self.rho**2)

    def treatment_coef(self, eps):
        if self.id == 0:
            return np.zeros_like(eps)
        if self.id == 1:
            return np.full_like(eps, 0.5)
        # conditional law of the error at x = x0 (= 0)
        mean0 = self.rho * self.sigma_eps / self.sigma_x * self.x0
        return norm.cdf(eps, loc=mean0, scale=self.cond_sd)

    def outcome(self, x, eps):
        return self.treatment_coef(eps) * np.abs(x) + x + 0.1 * x**2 + eps


def as_spec(structure):
    return structure if isinstance(structure, StructureSpec) else StructureSpec(int(structure))


def draw_sample(n, structure, seed, *keys):
    """Draw ``n`` observations; the stream is ``(seed, *keys)``."""
    spec = as_spec(structure)
    z = substream(seed, *keys).standard_normal((n, 2))
    x = spec.sigma_x * z[:, 0]
    eps = spec.sigma_eps * (spec.rho * z[:, 0] + np.sqrt(1 - spec.rho**2) * z[:, 1])
    return Sample(spec.outcome(x, eps), x)


def true_qrkd(structure, tau):
    spec = as_spec(structure)
    return {0: 0.0, 1: 0.5, 2: float(tau)}[spec.id]


def structural_quantile(structure, tau, x):
    """Closed-form conditional quantile Q_{Y|X}(tau | x).

    Valid because each outcome is strictly increasing in the error.
    """
    spec = as_spec(structure)
    x = np.asarray(x, dtype=float)
    q = spec.rho * spec.sigma_eps / spec.sigma_x * x + spec.cond_sd * norm.ppf(tau)
    return spec.outcome(x, q)


@dataclass(frozen=True)
class MonteCarloConfig:
    structure: int
    n: int
    replications: int = 200
    grid: tuple = DEFAULT_GRID
    level: float = 0.95
    seed: int = 0
    run_tests: bool = True
    p: int = 2
    M: int = 1000

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.n < 100:
            raise ValueError("sample size must be at least 100")
        object.__setattr__(self, "grid", tuple(float(t) for t in self.grid))
        if self.run_tests and len(self.grid) < 2:
            raise ValueError("uniform tests need at least two grid points; pass run_tests=False")


@dataclass
class MonteCarloReport:
    config: MonteCarloConfig
    estimates: np.ndarray
    truth: np.ndarray
    acceptance: dict
    failures: int
    timing: float = field(default=0.0, compare=False)

    @property
    def grid(self):
        return self.config.grid

    @property
    def mean(self):
        return self.estimates.mean(axis=0)

    @property
    def bias(self):
        return self.mean - self.truth

    @property
    def abs_bias(self):
        return np.abs(self.bias)

    @property
    def sd(self):
        return self.estimates.std(axis=0)

    @property
    def rmse(self):
        return np.sqrt(np.mean((self.estimates - self.truth) ** 2, axis=0))

    def rows(self):
        """One record per quantile: structure, n, tau, |bias|, SD, RMSE, mean."""
        out = []
        for i, t in enumerate(self.grid):
            out.append(
                {
                    "structure": self.config.structure,
                    "n": self.config.n,
                    "tau": t,
                    "abs_bias": float(self.abs_bias[i]),
                    "sd": float(self.sd[i]),
                    "rmse": float(self.rmse[i]),
                    "mean": float(self.mean[i]),
                }
            )
        return out

    def to_dict(self):
        return {
            "config": asdict(self.config) | {"grid": list(self.config.grid)},
            "replications_used": int(self.estimates.shape[0]),
            "failures": self.failures,
            "per_tau": self.rows(),
            "acceptance": self.acceptance,
        }


def _pivot_seed(seed, rep):
    return int(np.random.SeedSequence(int(seed), spawn_key=(rep, 1)).generate_state(1, np.uint64)[0])


def replicate(config, rep):
    """One replication: estimates on the grid and test acceptance flags.

    Returns ``None`` when the local design is rank deficient.
    """
    spec = as_spec(config.structure)
    sample = draw_sample(config.n, spec, config.seed, rep, 0)
    try:
        res = analyze(
            sample,
            spec.design,
            config.grid,
            p=config.p,
            M=config.M,
            seed=_pivot_seed(config.seed, rep),
            level=config.level,
            inference=config.run_tests,
        )
    except (RankDeficientError, ConvergenceError):
        return None
    accept = None
    if config.run_tests:
        accept = [not t.reject for t in res.tests]
    return res.values, accept


def run_monte_carlo(config, n_jobs=1):
    """Replicate ``config`` and aggregate bias / SD / RMSE and test acceptance.

    Replications use independent substreams, so the report does not depend
    on ``n_jobs``. Failed replications are dropped; more than 5% aborts.
    """
    start = time.perf_counter()
    if n_jobs == 1:
        results = [replicate(config, r) for r in range(config.replications)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(replicate)(config, r) for r in range(config.replications)
        )
    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    if failures > 0.05 * config.replications:
        raise MonteCarloError(f"{failures} of {config.replications} replications failed")
    est = np.array([r[0] for r in ok])
    truth = np.array([true_qrkd(config.structure, t) for t in config.grid])
    acceptance = {}
    if config.run_tests:
        flags = np.array([r[1] for r in ok], dtype=float)
        acceptance = {name: float(flags[:, i].mean()) for i, name in enumerate(TEST_NAMES)}
    return MonteCarloReport(
        config, est, truth, acceptance, failures, time.perf_counter() - start
    )
