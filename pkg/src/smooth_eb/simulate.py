"""Monte Carlo scenarios: two-point, Laplace and Gamma priors, homoscedastic
or with a discrete set of noise levels, run end to end (estimate ``c0``,
fit, calibrate, evaluate coverage and length against the truth)."""
import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr

from ._rng import as_generator, child_seeds
from .coverage import DEFAULT_EVAL, DEFAULT_MC, calibrate_threshold
from .exceptions import DataError, SmoothEBError
from .identify import NeighborhoodOptions, estimate_c0
from .metrics import DensityFn, l2_sq, tv, wtv
from .model import Sample, SmoothModel, validate_mixture
from .npmle import FitOptions, marginal_density, solve_npmle
from .posterior import prior_density

C_FLOOR = 1e-2


# ------------------------------------------------------------------ priors


@dataclass(frozen=True)
class TwoPointPrior:
    """``theta ~ N(-a, c^2)/2 + N(a, c^2)/2``; ``a = 0`` gives ``N(0, c^2)``."""

    a: float = 2.0
    c: float = 1.0

    @property
    def model(self):
        return SmoothModel(validate_mixture([-self.a, self.a], [0.5, 0.5]), self.c)

    @property
    def c0(self):
        return self.c

    def sample_theta(self, size, rng):
        return self.model.sample_theta(size, rng)

    def density(self, theta):
        return prior_density(self.model, theta)

    def marginal(self, x, sigma=1.0):
        return marginal_density(self.model, x, sigma)

    def window(self):
        return -self.a - 8 * self.c, self.a + 8 * self.c


@dataclass(frozen=True)
class LaplacePrior:
    """Standard Laplace prior, density ``exp(-|theta|) / 2``."""

    c0 = None

    def sample_theta(self, size, rng):
        u = rng.uniform(-0.5, 0.5, size)
        return -np.sign(u) * np.log1p(-2 * np.abs(u))

    def density(self, theta):
        return 0.5 * np.exp(-np.abs(np.asarray(theta, dtype=float)))

    def marginal(self, x, sigma=1.0):
        x = np.asarray(x, dtype=float)
        right = -x + sigma**2 / 2 + log_ndtr(x / sigma - sigma)
        left = x + sigma**2 / 2 + log_ndtr(-x / sigma - sigma)
        return 0.5 * np.exp(np.logaddexp(right, left))

    def window(self):
        return -20.0, 20.0


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(1, 1) prior, i.e. the standard exponential."""

    c0 = None

    def sample_theta(self, size, rng):
        return -np.log1p(-rng.uniform(size=size))

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.where(theta >= 0, np.exp(-np.abs(theta)), 0.0)

    def marginal(self, x, sigma=1.0):
        x = np.asarray(x, dtype=float)
        return np.exp(-x + sigma**2 / 2 + log_ndtr(x / sigma - sigma))

    def window(self):
        return -5.0, 30.0


@dataclass(frozen=True)
class UniformBasePrior:
    """``theta = xi + c Z`` with ``xi ~ Unif[-L, L]``."""

    L: float = 1.0
    c: float = 1.0

    def sample_theta(self, size, rng):
        return rng.uniform(-self.L, self.L, size) + self.c * rng.standard_normal(size)


def make_prior(kind, a=2.0, c=1.0):
    if kind == "two-point":
        return TwoPointPrior(float(a), float(c))
    if kind == "laplace":
        return LaplacePrior()
    if kind == "gamma":
        return GammaPrior()
    raise DataError(f"unknown prior {kind!r}")


# --------------------------------------------------------------- scenarios

TABLE3_SIGMAS = (math.sqrt(0.5), math.sqrt(0.75), 1.0, math.sqrt(2.0))


@dataclass
class Scenario:
    """One simulation design.

    Parameters
    ----------
    prior : {"two-point", "laplace", "gamma"}
    a, c : float
        Two-point prior location and smoothing.
    n : int
    sigma_levels, sigma_probs : tuple
        Discrete noise-sd distribution; a single level is homoscedastic.
    beta : float
    reps : int
    seed : int
    mode : {"oracle", "estimate"}
        Use the true ``c0`` or estimate it by the neighborhood procedure.
    calib_mc, eval_mc : int
        Monte Carlo sizes for threshold calibration and for evaluation.
    include_oracle : bool
        Also evaluate the oracle rule calibrated on the true model.
    """

    name: str = "custom"
    prior: str = "two-point"
    a: float = 2.0
    c: float = 1.0
    n: int = 1000
    sigma_levels: tuple = (1.0,)
    sigma_probs: tuple = None
    beta: float = 0.05
    reps: int = 20
    seed: int = 0
    mode: str = "oracle"
    calib_mc: int = DEFAULT_MC
    eval_mc: int = DEFAULT_EVAL
    include_oracle: bool = False
    fit_options: FitOptions = field(default_factory=FitOptions)
    neighborhood: NeighborhoodOptions = field(default_factory=NeighborhoodOptions)

    def __post_init__(self):
        if self.reps < 1:
            raise DataError("reps must be >= 1")
        if self.mode not in ("oracle", "estimate"):
            raise DataError(f"mode must be 'oracle' or 'estimate', got {self.mode!r}")
        levels = tuple(float(s) for s in self.sigma_levels)
        probs = self.sigma_probs or tuple(1 / len(levels) for _ in levels)
        if len(probs) != len(levels) or abs(sum(probs) - 1) > 1e-9:
            raise DataError("sigma_probs must match sigma_levels and sum to 1")
        self.sigma_levels, self.sigma_probs = levels, tuple(float(p) for p in probs)
        if self.mode == "oracle" and self.prior != "two-point":
            raise DataError("oracle mode needs a known c0, available only for two-point priors")

    @property
    def truth(self):
        return make_prior(self.prior, self.a, self.c)

    def draw_sigma(self, size, rng):
        if len(self.sigma_levels) == 1:
            return np.full(size, self.sigma_levels[0])
        return rng.choice(np.array(self.sigma_levels), size=size, p=np.array(self.sigma_probs))

    def describe(self):
        d = asdict(self)
        d.pop("fit_options")
        d.pop("neighborhood")
        return d


def named_scenario(name, a=2.0, mode="oracle", prior=None, **kw):
    """Scenarios of the coverage tables.

    ``table1``: two-point prior, unit noise.  ``table2``: Laplace or Gamma
    prior (``prior="laplace" | "gamma"``), ``c0`` estimated.  ``table3``:
    two-point prior with noise sd drawn uniformly from
    ``{sqrt(1/2), sqrt(3/4), 1, sqrt(2)}``.
    """
    if name == "table1":
        return Scenario(name=name, prior="two-point", a=a, c=1.0, mode=mode, **kw)
    if name == "table2":
        prior = prior or "laplace"
        return Scenario(name=f"table2-{prior}", prior=prior, mode="estimate", **kw)
    if name == "table3":
        return Scenario(
            name=name, prior="two-point", a=a, c=1.0, mode=mode, sigma_levels=TABLE3_SIGMAS, **kw
        )
    raise DataError(f"unknown scenario {name!r}")


@dataclass
class ScenarioReport:
    scenario: dict
    coverage_mean: float
    coverage_sd: float
    length_mean: float
    length_sd: float
    c0_mean: float
    c0_sd: float
    rows: list
    wall_time: float
    oracle_coverage_mean: float = None
    oracle_length_mean: float = None

    def to_dict(self):
        return asdict(self)

    def rows_csv(self):
        buf = io.StringIO()
        if self.rows:
            w = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)
        return buf.getvalue()


def _evaluate(rules, truth, scenario, rng):
    """Coverage and mean length of per-sigma rules on fresh draws."""
    m = scenario.eval_mc
    theta = truth.sample_theta(m, rng)
    sig = scenario.draw_sigma(m, rng)
    x = theta + sig * rng.standard_normal(m)
    hit = np.empty(m, dtype=bool)
    length = np.empty(m)
    for s, rule in rules.items():
        idx = sig == s
        if idx.any():
            hit[idx] = rule.contains(theta[idx], x[idx])
            length[idx] = rule.lengths(x[idx])
    return float(hit.mean()), float(length.mean())


def run_rep(scenario, rep, rep_seed):
    """One replication; returns a flat dict of results."""
    data_seed, cv_seed, cal_seed, eval_seed = child_seeds(rep_seed, 4)
    truth = scenario.truth
    rng = as_generator(data_seed)
    n = scenario.n
    theta = truth.sample_theta(n, rng)
    sigma = scenario.draw_sigma(n, rng)
    sample = Sample(theta + sigma * rng.standard_normal(n), sigma)

    row = {"rep": rep, "seed": rep_seed}
    if scenario.mode == "oracle":
        c = truth.c0
        row["c0_hat"] = None
    else:
        est = estimate_c0(sample, scenario.neighborhood, seed=cv_seed)
        row["c0_hat"] = est.c0_hat
        c = est.c0_hat
    row["c_floored"] = c < C_FLOOR
    c = max(c, C_FLOOR)
    row["c_used"] = c

    fit = solve_npmle(sample, c, scenario.fit_options)
    row["n_atoms"] = len(fit.mixture)
    row["optimality_gap"] = fit.optimality_gap
    model = fit.model
    levels = sorted(set(float(s) for s in sample.sigma))
    seeds = child_seeds(cal_seed, len(levels))
    rules = {
        s: calibrate_threshold(model, s, scenario.beta, scenario.calib_mc, sd)
        for s, sd in zip(levels, seeds)
    }
    row["coverage"], row["length"] = _evaluate(rules, truth, scenario, as_generator(eval_seed))
    if scenario.include_oracle and hasattr(truth, "model"):
        orules = {
            s: calibrate_threshold(truth.model, s, scenario.beta, scenario.calib_mc, sd)
            for s, sd in zip(levels, seeds)
        }
        cov, ln = _evaluate(orules, truth, scenario, as_generator(eval_seed))
        row["oracle_coverage"], row["oracle_length"] = cov, ln
    return row


def _run_rep_safe(args):
    scenario, rep, seed = args
    try:
        return run_rep(scenario, rep, seed)
    except SmoothEBError as exc:
        raise type(exc)(f"replication {rep}: {exc}") from exc


def run_scenario(scenario, threads=1):
    """Run all replications of ``scenario`` and aggregate.

    Replication seeds are derived from ``scenario.seed``, so the report does
    not depend on ``threads``.
    """
    start = time.perf_counter()
    seeds = child_seeds(scenario.seed, scenario.reps)
    jobs = [(scenario, r, s) for r, s in enumerate(seeds)]
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_rep_safe, jobs))
    else:
        rows = [_run_rep_safe(j) for j in jobs]

    def stats(key):
        v = np.array([r[key] for r in rows], dtype=float)
        if np.all(np.isnan(v)):
            return None, None
        sd = float(np.nanstd(v, ddof=1)) if v.size > 1 else 0.0
        return float(np.nanmean(v)), sd

    cov, cov_sd = stats("coverage")
    ln, ln_sd = stats("length")
    c0, c0_sd = stats("c0_hat")
    report = ScenarioReport(
        scenario=scenario.describe(),
        coverage_mean=cov,
        coverage_sd=cov_sd,
        length_mean=ln,
        length_sd=ln_sd,
        c0_mean=c0,
        c0_sd=c0_sd,
        rows=rows,
        wall_time=time.perf_counter() - start,
    )
    if rows and "oracle_coverage" in rows[0]:
        report.oracle_coverage_mean = stats("oracle_coverage")[0]
        report.oracle_length_mean = stats("oracle_length")[0]
    return report


# ----------------------------------------------------------------- figures


@dataclass
class FigureData:
    """Prior and marginal curves of a fitted fixture on 1001-point grids."""

    name: str
    n: int
    seed: int
    c: float
    theta: np.ndarray
    g_true: np.ndarray
    g_fit: np.ndarray
    x: np.ndarray
    f_true: np.ndarray
    f_fit: np.ndarray
    model: SmoothModel = None

    def prior_csv(self):
        return _curves_csv(("theta", "g_true", "g_smooth_npmle"), self.theta, self.g_true, self.g_fit)

    def marginal_csv(self):
        return _curves_csv(("x", "f_true", "f_fit"), self.x, self.f_true, self.f_fit)

    def errors(self):
        """L2 distance of the priors and TV distance of the marginals."""
        g_fit = DensityFn.prior(self.model)
        truth = FIXTURES[self.name]
        lo, hi = truth.window()
        g_true = DensityFn(truth.density, lo, hi)
        f_true = DensityFn(truth.marginal, lo - 10, hi + 10)
        out = {
            "l2_prior": math.sqrt(l2_sq(g_fit, g_true, n=20001)),
            "tv_marginal": tv(DensityFn.marginal(self.model), f_true, n=20001),
        }
        if hasattr(truth, "model"):
            out["wtv"] = wtv(self.model, truth.model, truth.model)
        return out


def _curves_csv(header, *cols):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


FIXTURES = {"two-comp": TwoPointPrior(2.0, 1.0), "laplace": LaplacePrior()}


def run_figure_fixture(name, n=1000, seed=0, c=None, fit_options=None, neighborhood=None):
    """Fit one of the figure fixtures and tabulate true and fitted curves.

    Parameters
    ----------
    name : {"two-comp", "laplace"}
    n : int
        At least 100.
    seed : int
    c : float, optional
        Smoothing scale; estimated by the cross-validated neighborhood
        procedure when omitted.
    """
    if name not in FIXTURES:
        raise DataError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    if n < 100:
        raise DataError("figure fixtures need n >= 100")
    truth = FIXTURES[name]
    data_seed, cv_seed = child_seeds(seed, 2)
    rng = as_generator(data_seed)
    theta = truth.sample_theta(n, rng)
    sample = Sample(theta + rng.standard_normal(n))
    if c is None:
        c = estimate_c0(sample, neighborhood, seed=cv_seed).c0_hat
    c = max(float(c), C_FLOOR)
    model = solve_npmle(sample, c, fit_options).model
    lo, hi = (-6.0, 6.0) if name == "two-comp" else (-8.0, 8.0)
    t = np.linspace(lo, hi, 1001)
    x = np.linspace(lo - 1, hi + 1, 1001)
    return FigureData(
        name=name,
        n=n,
        seed=seed,
        c=c,
        theta=t,
        g_true=truth.density(t),
        g_fit=prior_density(model, t),
        x=x,
        f_true=truth.marginal(x),
        f_fit=marginal_density(model, x),
        model=model,
    )


def with_reps(scenario, reps):
    return replace(scenario, reps=reps)
