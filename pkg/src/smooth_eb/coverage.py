"""Optimal marginal coverage sets and HPD sets.

The optimal rule at level ``1 - beta`` is the posterior super-level set
``{theta : pi(theta | x) >= k}`` with one threshold ``k`` shared by every
``x``; ``k`` is the largest value for which the marginal probability of
``pi(theta | X) >= k`` under the joint law is at least ``1 - beta``.  It is
calibrated here by Monte Carlo on the fitted model.  HPD sets instead pick
``k(x)`` so every set holds posterior content ``1 - beta``.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.special import ndtr

from ._rng import as_generator, child_seeds
from .exceptions import BudgetTooSmall, DataError
from .model import IntervalUnion, Sample
from .npmle import marginal_density, require_positive_c
from .posterior import (
    posterior_cdf,
    posterior_components,
    posterior_density,
    posterior_peak_bound,
    posterior_window,
)

DEFAULT_MC = 100_000
DEFAULT_EVAL = 20_000


class LengthOverflowWarning(RuntimeWarning):
    """A rule produced sets of infinite length."""


@dataclass(frozen=True)
class CoverageRule:
    """Plug-in optimal marginal coverage rule ``x -> {pi(.|x) >= k_hat}``.

    Attributes
    ----------
    model : SmoothModel
    sigma_i : float
        Noise sd the threshold was calibrated for.
    k_hat : float
    beta : float
    mc_size : int
        Monte Carlo budget used for calibration.
    seed : int or None
    """

    model: object
    sigma_i: float
    k_hat: float
    beta: float
    mc_size: int
    seed: object = None

    def __call__(self, x):
        return coverage_set(self, x)

    def contains(self, theta, x):
        """Vectorised membership test ``pi(theta | x) >= k_hat``."""
        return posterior_density(self.model, theta, x, self.sigma_i) >= self.k_hat

    def lengths(self, xs):
        return level_set_lengths(self.model, self.sigma_i, self.k_hat, xs)


@dataclass(frozen=True)
class HpdRule:
    """Highest posterior density rule with content ``1 - beta`` at every x."""

    model: object
    sigma_i: float
    beta: float

    def __call__(self, x):
        return hpd_set(self.model, self.sigma_i, x, self.beta)


@dataclass(frozen=True)
class RuleEvaluation:
    """Monte Carlo coverage and expected length of a rule.

    Unpacks as ``(coverage, mean_length)``.
    """

    coverage: float
    mean_length: float
    coverage_se: float
    length_se: float
    n_draws: int
    empty_fraction: float = 0.0
    length_overflow: bool = False

    def __iter__(self):
        return iter((self.coverage, self.mean_length))


def simulate_joint(model, sigma_i, B, seed=None):
    """Draw ``B`` pairs ``theta ~ g``, ``X | theta ~ N(theta, sigma_i^2)``.

    Returns
    -------
    theta, x : ndarray
    """
    if B < 1:
        raise DataError("B must be >= 1")
    rng = as_generator(seed)
    theta = model.sample_theta(int(B), rng)
    x = theta + sigma_i * rng.standard_normal(int(B))
    return theta, x


def calibrate_threshold(model, sigma_i=1.0, beta=0.05, B=DEFAULT_MC, seed=None):
    """Monte Carlo threshold of the plug-in optimal marginal rule.

    With ``v_i = pi(theta_i | X_i)`` on ``B`` simulated pairs, ``k_hat`` is
    the largest ``k`` such that at least ``(1 - beta) B`` of the ``v_i`` are
    ``>= k``, i.e. the order statistic ``v_(floor(beta B) + 1)``.

    Raises
    ------
    BudgetTooSmall
        If ``B < ceil(10 / beta)``.
    """
    if not 0 < beta < 1:
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    require_positive_c(model.c)
    need = math.ceil(10 / beta)
    if B < need:
        raise BudgetTooSmall(f"B={B} is below ceil(10/beta)={need}")
    theta, x = simulate_joint(model, sigma_i, B, seed)
    v = posterior_density(model, theta, x, sigma_i)
    j = int(math.floor(beta * B + 1e-9))
    k_hat = float(np.partition(v, j)[j])
    return CoverageRule(model, float(sigma_i), k_hat, float(beta), int(B), seed)


def _scan(model, sigma_i, x, n_scan, width):
    lo, hi = posterior_window(model, x, sigma_i, width=width)
    theta = np.linspace(lo, hi, n_scan)
    return theta, posterior_density(model, theta, x, sigma_i)


def _level_set_from_scan(model, sigma_i, x, theta, dens, k, xtol, refine=True):
    above = dens >= k
    if not above.any():
        return IntervalUnion()
    edges = np.diff(above.astype(np.int8))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    stops = list(np.nonzero(edges == -1)[0])
    clipped = False
    if above[0]:
        starts.insert(0, 0)
        clipped = True
    if above[-1]:
        stops.append(theta.size - 1)
        clipped = True

    def root(a, b):
        if not refine:
            # linear interpolation of the crossing inside the scan cell
            i = np.searchsorted(theta, a)
            da, db = dens[i] - k, dens[i + 1] - k
            return a + (b - a) * da / (da - db)
        return brentq(
            lambda t: posterior_density(model, t, x, sigma_i) - k, a, b, xtol=xtol, rtol=1e-15
        )

    out = []
    for i0, i1 in zip(starts, stops):
        a = theta[i0] if i0 == 0 else root(theta[i0 - 1], theta[i0])
        b = theta[i1] if i1 == theta.size - 1 else root(theta[i1], theta[i1 + 1])
        out.append((a, b))
    return IntervalUnion(np.array(out), clipped=clipped)


def level_set(model, sigma_i, x, k, n_scan=4001, width=8.0, xtol=1e-10):
    """``{theta : pi(theta | x) >= k}`` by grid scan plus root refinement.

    The scan covers ``width`` posterior component sds beyond the outermost
    posterior component; each crossing is refined by Brent's method.
    """
    theta, dens = _scan(model, sigma_i, float(x), n_scan, width)
    return _level_set_from_scan(model, sigma_i, float(x), theta, dens, k, xtol)


def coverage_set(rule, x, n_scan=4001, width=8.0):
    """Set of ``rule`` at observation ``x``; may be empty for extreme ``x``."""
    return level_set(rule.model, rule.sigma_i, x, rule.k_hat, n_scan=n_scan, width=width)


def set_content(model, sigma_i, x, s):
    """Posterior probability of the interval union ``s``."""
    if s.empty:
        return 0.0
    a, b = s.intervals[:, 0], s.intervals[:, 1]
    return float(np.sum(posterior_cdf(model, b, x, sigma_i) - posterior_cdf(model, a, x, sigma_i)))


def hpd_set(model, sigma_i, x, beta, tol=1e-4, n_scan=4001, width=8.0, max_iter=200):
    """Highest posterior density set with content ``1 - beta`` within ``tol``.

    The threshold ``k(x)`` is found by bisection; the content of each
    candidate set is integrated exactly through the posterior's Gaussian
    mixture form.
    """
    require_positive_c(model.c)
    if not 0 < beta < 1:
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    x = float(x)
    theta, dens = _scan(model, sigma_i, x, n_scan, width)
    target = 1 - beta
    lo, hi = 0.0, float(dens.max())
    k = 0.5 * (lo + hi)
    # bisect on interpolated crossings, then refine the final set only
    for _ in range(max_iter):
        k = 0.5 * (lo + hi)
        s = _level_set_from_scan(model, sigma_i, x, theta, dens, k, 1e-12, refine=False)
        content = set_content(model, sigma_i, x, s)
        if abs(content - target) <= tol / 4:
            break
        if content > target:
            lo = k
        else:
            hi = k
    return _level_set_from_scan(model, sigma_i, x, theta, dens, k, 1e-12)


def _relative_grid(model, sigma_i, points_per_sd, width):
    """Local theta grid shared by every ``x``.

    Node ``t`` stands for ``theta = alpha x + (1 - alpha) atoms[0] - width
    tau + t``; returns the cell width and the standardised offsets ``z``
    of every node from every posterior component centre.
    """
    c, atoms = model.c, model.atoms
    alpha = c**2 / (c**2 + sigma_i**2)
    tau = math.sqrt(alpha) * sigma_i
    h = tau / points_per_sd
    span = (1 - alpha) * (atoms[-1] - atoms[0]) + 2 * width * tau
    t = np.arange(int(math.ceil(span / h)) + 2) * h
    z = (t[:, None] - width * tau + (1 - alpha) * (atoms[0] - atoms)[None, :]) / tau
    return h, tau, z


def _cell_cover(d):
    """Fraction of each grid cell where the sampled function ``d`` is >= 0,
    with crossings placed by linear interpolation."""
    pos = d >= 0
    a, b = d[:, :-1], d[:, 1:]
    both = pos[:, :-1] & pos[:, 1:]
    one = pos[:, :-1] ^ pos[:, 1:]
    frac = np.where(one, np.where(pos[:, :-1], a, b) / np.where(one, np.abs(a - b), 1.0), 0.0)
    return both + frac, pos[:, 0] | pos[:, -1]


def level_set_lengths(model, sigma_i, k, xs, points_per_sd=100, width=8.0, chunk=2000):
    """Lebesgue lengths of ``{pi(.|x) >= k}`` for many ``x`` at once.

    For each ``x`` the posterior is evaluated on a local grid whose offset
    from ``alpha x`` is the same for every ``x``, so the component kernel
    matrix is shared.  Crossings are located by linear interpolation within
    grid cells.
    """
    require_positive_c(model.c)
    xs = np.asarray(xs, dtype=float).reshape(-1)
    h, tau, z = _relative_grid(model, sigma_i, points_per_sd, width)
    K = np.exp(-0.5 * z**2) / (tau * math.sqrt(2 * math.pi))
    out = np.empty(xs.size)
    for s0 in range(0, xs.size, chunk):
        p, _, _ = posterior_components(model, xs[s0 : s0 + chunk], sigma_i)
        cover, edge = _cell_cover(p @ K.T - k)
        out[s0 : s0 + chunk] = np.where(edge, np.inf, h * cover.sum(axis=1))
    return out


def plugin_coverage(model, sigma_i, k, n_x=801, points_per_sd=100, width=8.0):
    """Probability of ``pi(theta | X) >= k`` under the model's own joint law.

    Deterministic counterpart of the Monte Carlo calibration: the posterior
    content of each level set is integrated exactly cell by cell through
    the posterior distribution function, then averaged over ``x`` against
    the marginal density by Simpson's rule.
    """
    require_positive_c(model.c)
    s = math.sqrt(model.c**2 + sigma_i**2)
    xs = np.linspace(model.atoms[0] - 10 * s, model.atoms[-1] + 10 * s, n_x | 1)
    _, tau, z = _relative_grid(model, sigma_i, points_per_sd, width)
    K = np.exp(-0.5 * z**2) / (tau * math.sqrt(2 * math.pi))
    C = ndtr(z)
    p, _, _ = posterior_components(model, xs, sigma_i)
    cover, _ = _cell_cover(p @ K.T - k)
    content = np.sum(np.diff(p @ C.T, axis=1) * cover, axis=1)
    f = marginal_density(model, xs, sigma_i)
    return float(simpson(f * content, x=xs))


def population_threshold(model, sigma_i=1.0, beta=0.05, **quad):
    """Threshold ``k`` with plug-in coverage exactly ``1 - beta``.

    Solves ``plugin_coverage(k) = 1 - beta`` by Brent's method; free of
    Monte Carlo error, at the price of a quadrature over ``x``.
    """
    if not 0 < beta < 1:
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    top = float(posterior_peak_bound(model, sigma_i))
    return brentq(
        lambda k: plugin_coverage(model, sigma_i, k, **quad) - (1 - beta),
        1e-12 * top, top, xtol=1e-14, rtol=1e-12,
    )


def evaluate_rule(rule_fn, truth, sigma_i=1.0, B=DEFAULT_EVAL, seed=None):
    """Monte Carlo coverage and mean length of ``rule_fn`` under ``truth``.

    Parameters
    ----------
    rule_fn : callable
        Maps ``x`` to an :class:`IntervalUnion`.  A :class:`CoverageRule`
        takes a vectorised path.
    truth : SmoothModel
    sigma_i : float
    B : int
        Number of Monte Carlo pairs (at least 1000).
    seed : int, optional

    Returns
    -------
    RuleEvaluation
        ``length_overflow`` is set, with a warning, when any set has
        infinite length.
    """
    if B < 1000:
        raise BudgetTooSmall("evaluate_rule needs B >= 1000")
    theta, x = simulate_joint(truth, sigma_i, B, seed)
    return evaluate_on_draws(rule_fn, theta, x)


def evaluate_on_draws(rule_fn, theta, x):
    """Coverage and mean length of ``rule_fn`` over given ``(theta, x)`` pairs."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if isinstance(rule_fn, CoverageRule):
        hit = rule_fn.contains(theta, x)
        lengths = rule_fn.lengths(x)
    else:
        hit = np.empty(x.size, dtype=bool)
        lengths = np.empty(x.size)
        for i, xi in enumerate(x):
            s = rule_fn(xi)
            hit[i] = bool(s.contains(theta[i]))
            lengths[i] = s.length
    return _summarise(hit, lengths)


def _summarise(hit, lengths):
    n = hit.size
    overflow = not np.all(np.isfinite(lengths))
    if overflow:
        warnings.warn("rule produced sets of infinite length", LengthOverflowWarning, stacklevel=3)
    cov = float(hit.mean())
    mean_len = float(lengths.mean()) if not overflow else math.inf
    len_se = float(lengths.std(ddof=1) / math.sqrt(n)) if not overflow and n > 1 else math.nan
    return RuleEvaluation(
        coverage=cov,
        mean_length=mean_len,
        coverage_se=math.sqrt(max(cov * (1 - cov), 0.0) / n),
        length_se=len_se,
        n_draws=n,
        empty_fraction=float(np.mean(lengths == 0)),
        length_overflow=overflow,
    )


def hetero_rules(model, sample, beta=0.05, B=DEFAULT_MC, seed=None):
    """One calibrated rule per distinct noise level, listed per observation.

    Rules are cached by sigma value; seeds for the distinct levels are
    derived from ``seed`` in increasing order of sigma.
    """
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    levels = np.unique(sample.sigma)
    seeds = child_seeds(seed, levels.size)
    cache = {
        float(s): calibrate_threshold(model, float(s), beta, B, sd) for s, sd in zip(levels, seeds)
    }
    return [cache[float(s)] for s in sample.sigma]

