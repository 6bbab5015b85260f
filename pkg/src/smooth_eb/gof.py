"""Goodness-of-fit tests of ``H0: the prior is a single Gaussian``.

Under ``H0`` the base distribution is a point mass, so ``X_i`` is normal
with sd ``sqrt(c^2 + sigma_i^2)`` and unknown mean.  Two tests are
offered: the crossfit split likelihood ratio test, valid in finite
samples, and a likelihood ratio test calibrated by parametric bootstrap.
"""
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from ._rng import as_generator, child_seeds, fresh_seed
from .exceptions import BudgetTooSmall, DataError, SplitTooSmall
from .identify import split_halves
from .model import Grid, Sample
from .npmle import FitOptions, build_grid, log_likelihood, normal_logpdf, solve_npmle

BOOTSTRAP_GRID = 150


@dataclass
class TestReport:
    """Outcome of a goodness-of-fit test.

    ``statistic`` is ``log W`` for the split test and the log-likelihood
    ratio for the bootstrap test.
    """

    __test__ = False

    statistic: float
    decision: str
    beta: float
    method: str
    p_value: float = None
    seed: int = None
    split: str = None
    B: int = None
    n: int = None

    @property
    def reject(self):
        return self.decision == "reject"

    def to_dict(self):
        return asdict(self)


def _null_fit(sample, c):
    """MLE of the common mean under ``H0`` and the null log-likelihood."""
    s = np.sqrt(c**2 + sample.sigma**2)
    w = 1 / s**2
    a = float(np.sum(w * sample.x) / np.sum(w))
    return a, float(np.sum(normal_logpdf(sample.x - a, s)))


def slr_gof_test(sample, c, beta=0.05, split_seed=None, fit_options=None):
    """Crossfit split likelihood ratio test.

    The NPMLE fitted on one half is compared with the Gaussian MLE of the
    other half on that other half; the two directions are averaged and
    ``H0`` is rejected when ``W > 1/beta``.  Everything is computed in the
    log domain.

    Parameters
    ----------
    sample : Sample
    c : float
        Smoothing scale; use an estimate of ``c0`` when unknown.
    beta : float
    split_seed : int, optional
        Seed of the random equal split; drawn fresh and recorded if omitted.

    Raises
    ------
    SplitTooSmall
        If ``n < 4``.
    """
    sample = sample if isinstance(sample, Sample) else Sample(sample)
    if len(sample) < 4:
        raise SplitTooSmall("the split test needs at least 4 observations")
    if not 0 < beta < 1:
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    if split_seed is None:
        split_seed = fresh_seed()
    fit_options = fit_options or FitOptions()
    a_idx, b_idx = split_halves(len(sample), split_seed)
    halves = sample.subset(a_idx), sample.subset(b_idx)

    def log_u(d0, d1):
        alt = solve_npmle(d1, c, fit_options).model
        _, null_ll = _null_fit(d0, c)
        return log_likelihood(alt, d0) - null_ll

    log_w = float(np.logaddexp(log_u(*halves), log_u(*halves[::-1])) - math.log(2))
    decision = "reject" if log_w > math.log(1 / beta) else "retain"
    return TestReport(
        statistic=log_w,
        decision=decision,
        beta=beta,
        method="slr",
        seed=int(split_seed),
        split=f"random halves {a_idx.size}/{b_idx.size}",
        n=len(sample),
    )


def _grid_with(sample, c, options, point):
    base = build_grid(sample, c, options).points
    if np.min(np.abs(base - point)) > 1e-12:
        base = np.sort(np.append(base, point))
    return Grid(base)


def glr_statistic(sample, c, grid_size=None, fit_options=None):
    """``Lambda = sum log f_H(X_i) - sum log phi(X_i - a_hat)``.

    The null mean is inserted into the NPMLE grid so the null model is
    nested and ``Lambda >= 0``.
    """
    a, null_ll = _null_fit(sample, c)
    opts = fit_options or FitOptions()
    if grid_size is not None:
        opts = replace(opts, grid_size=grid_size)
    grid = _grid_with(sample, c, opts, a)
    fit = solve_npmle(sample, c, opts, grid=grid)
    return fit.log_likelihood - null_ll


def glrt_bootstrap_test(sample, c, beta=0.05, B=100, seed=None, fit_options=None):
    """Likelihood ratio test calibrated by parametric bootstrap.

    Resamples are drawn from the fitted null ``N(a_hat, c^2 + sigma_i^2)``;
    each is refitted on its own grid of 150 points.  The p-value is
    ``(1 + #{Lambda* >= Lambda}) / (B + 1)`` and ``H0`` is rejected when
    it is below ``beta``.  The smallest attainable p-value is
    ``1 / (B + 1)``, so rejecting at ``beta = 0.05`` needs ``B >= 20``.

    Raises
    ------
    BudgetTooSmall
        If ``B < 19``.
    """
    sample = sample if isinstance(sample, Sample) else Sample(sample)
    if B < 19:
        raise BudgetTooSmall(f"B={B} is below 19; the p-value cannot go below 1/(B+1)")
    if not 0 < beta < 1:
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    if seed is None:
        seed = fresh_seed()
    stat = glr_statistic(sample, c, fit_options=fit_options)
    a, _ = _null_fit(sample, c)
    s = np.sqrt(c**2 + sample.sigma**2)
    # ties up to round-off count as exceedances
    cut = stat - 1e-8 * max(1.0, abs(stat))
    exceed = 0
    for child in child_seeds(seed, B):
        rng = as_generator(child)
        star = Sample(a + s * rng.standard_normal(len(sample)), sample.sigma)
        if glr_statistic(star, c, BOOTSTRAP_GRID, fit_options) >= cut:
            exceed += 1
    p = (1 + exceed) / (B + 1)
    return TestReport(
        statistic=float(stat),
        decision="reject" if p < beta else "retain",
        beta=beta,
        method="glrt-bootstrap",
        p_value=p,
        seed=int(seed),
        B=int(B),
        n=len(sample),
    )
