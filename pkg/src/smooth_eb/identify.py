"""Inference on the largest Gaussian component ``c0`` of the prior.

The neighborhood procedure looks for the largest ``sigma`` such that some
mixture ``H * N(0, sigma^2)`` lies within Kolmogorov-Smirnov distance
``eta`` of the empirical distribution.  For each ``sigma`` that question
is a linear feasibility problem in the weights of ``H`` on a fixed atom
grid; feasibility is monotone in ``sigma`` so bisection finds the
envelope.  ``c0`` then follows by subtracting the noise floor.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from ._rng import as_generator
from .exceptions import (
    DataError,
    DegenerateFolds,
    EtaTooLarge,
    GridTooCoarse,
    SampleTooSmall,
)
from .linprog import FeasibilityProblem, feasible_rowgen
from .model import Sample, validate_mixture
from .npmle import FitOptions, log_likelihood, normal_logpdf, solve_npmle

FLAG_NO_FEASIBLE = "no-feasible-sigma"
FLAG_DEGENERATE = "degenerate-bracket"


@dataclass
class NeighborhoodOptions:
    """Settings of the neighborhood procedure.

    Parameters
    ----------
    eta : float or str
        KS radius, ``"auto-cv"`` for cross-validation or ``"dkw:BETA"`` for
        the DKW radius at level ``BETA``.
    grid_size : int
        Number of equispaced atoms on ``[X_(1), X_(n)]``.
    bisect_eps : float
        Resolution of the bisection in ``sigma``.
    cv_folds : int
    cv_grid : int
        Number of log-spaced candidate radii.
    beta_cap : float
        Level defining the largest candidate radius.
    lp_tol : float
    """

    eta: object = "auto-cv"
    grid_size: int = 200
    bisect_eps: float = 1e-3
    cv_folds: int = 5
    cv_grid: int = 20
    beta_cap: float = 0.01
    lp_tol: float = 1e-9


@dataclass
class EnvelopeResult:
    """Largest feasible ``sigma`` and the LP witness found there."""

    sigma0: float
    eta: float
    atoms: np.ndarray = None
    weights: np.ndarray = None
    flag: str = None
    n_lp: int = 0

    @property
    def mixture(self):
        if self.weights is None:
            return None
        keep = self.weights > 0
        return validate_mixture(self.atoms[keep], self.weights[keep] / self.weights[keep].sum())


@dataclass
class C0Estimate:
    """Point estimate or upper confidence bound for ``c0``."""

    sigma0_hat: float
    c0_hat: float
    eta_used: float
    mode: str
    n: int
    sigma_floor: float = 1.0
    flag: str = None

    def to_dict(self):
        return asdict(self)


def dkw_eta(n, beta, heteroscedastic=False):
    """DKW radius ``sqrt(log(2/beta) / (2n))``; BDKW adds a factor ``e``
    inside the log for independent non-identical data."""
    top = 2 * math.e if heteroscedastic else 2.0
    return math.sqrt(math.log(top / beta) / (2 * n))


def _as_sample(sample):
    return sample if isinstance(sample, Sample) else Sample(sample)


def ks_distance_to_mixture(sample, mixture, sigma):
    """KS distance between the empirical CDF and ``mixture * N(0, sigma^2)``."""
    x = np.sort(_as_sample(sample).x)
    n = x.size
    F = ndtr((x[:, None] - mixture.atoms[None, :]) / sigma) @ mixture.weights
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(F - (i - 1) / n)), np.max(np.abs(F - i / n))))


def _bracket(sample):
    x, s2 = sample.x, sample.sigma**2
    var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    if sample.homoscedastic:
        floor2 = float(s2[0])
        hi2 = var
    else:
        floor2 = float(s2.min())
        hi2 = var - float(s2.mean()) + floor2
    return math.sqrt(floor2), math.sqrt(max(hi2, 0.0)), math.sqrt(floor2)


class _KSFeasibility:
    """Feasibility of the KS neighborhood LP as a function of ``sigma``."""

    def __init__(self, x, eta, grid_size, tol):
        self.x = np.sort(x)
        n = self.x.size
        self.atoms = np.linspace(self.x[0], self.x[-1], grid_size) if n > 1 else self.x.copy()
        i = np.arange(1, n + 1)
        lower = i / n - eta
        upper = (i - 1) / n + eta
        # Ah lies in [0, 1], so bounds outside that range never bind
        self.lower = np.where(lower <= 0, -np.inf, lower)
        self.upper = np.where(upper >= 1, np.inf, upper)
        self.tol = tol
        self.calls = 0
        # no continuous CDF is within 1/(2n) of the empirical CDF
        self.hopeless = bool(np.any(self.lower > self.upper))

    def __call__(self, sigma):
        if self.hopeless:
            return False, None
        self.calls += 1
        A = ndtr((self.x[:, None] - self.atoms[None, :]) / sigma)
        return feasible_rowgen(FeasibilityProblem(A, self.lower, self.upper), tol=self.tol)


def sigma0_envelope(sample, eta, options=None, _start=None):
    """``eta``-upper envelope of the Gaussian component ``sigma0``.

    Bisection over ``[sigma_lo, sigma_hi]``: homoscedastic data use
    ``[sigma, sample sd]``; heteroscedastic data use
    ``sigma_lo^2 = min sigma_i^2`` and
    ``sigma_hi^2 = var(x) - mean(sigma_i^2) + min sigma_i^2``.

    Returns
    -------
    EnvelopeResult
        ``flag`` is ``"no-feasible-sigma"`` when even ``sigma_lo`` is
        infeasible and ``"degenerate-bracket"`` when ``sigma_hi <= sigma_lo``;
        ``sigma0`` is ``sigma_lo`` in both cases.

    Raises
    ------
    EtaTooLarge
        If ``eta >= 1/2``.
    """
    options = options or NeighborhoodOptions()
    sample = _as_sample(sample)
    eta = float(eta)
    if eta >= 0.5:
        raise EtaTooLarge(f"eta={eta} must be below 1/2")
    if eta <= 0:
        raise DataError(f"eta must be positive, got {eta}")
    lo, hi, _ = _bracket(sample)
    oracle = _KSFeasibility(sample.x, eta, options.grid_size, options.lp_tol)
    if _start is not None and _start.flag is None and _start.sigma0 >= lo:
        # a radius-eta' witness is feasible for any eta >= eta'
        lo, h = _start.sigma0, _start.weights
    else:
        ok, h = oracle(lo)
        if not ok:
            return EnvelopeResult(lo, eta, oracle.atoms, None, FLAG_NO_FEASIBLE, oracle.calls)
    if hi <= lo:
        flag = FLAG_DEGENERATE if _start is None else None
        return EnvelopeResult(lo, eta, oracle.atoms, h, flag, oracle.calls)
    while hi - lo >= options.bisect_eps:
        mid = 0.5 * (lo + hi)
        ok, w = oracle(mid)
        if ok:
            lo, h = mid, w
        else:
            hi = mid
    return EnvelopeResult(lo, eta, oracle.atoms, h, None, oracle.calls)


def _c0_from_sigma(sigma0, floor):
    return math.sqrt(max(sigma0**2 - floor**2, 0.0))


def c0_upper_bound(sample, beta=0.05, options=None):
    """Finite-sample upper confidence bound for ``c0`` at level ``1 - beta``.

    Uses the DKW radius (BDKW for heteroscedastic data).

    Raises
    ------
    SampleTooSmall
        If the radius is not below 1/2.
    """
    sample = _as_sample(sample)
    if not 0 < beta < 1:
        raise DataError(f"beta must lie in (0, 1), got {beta}")
    eta = dkw_eta(len(sample), beta, heteroscedastic=not sample.homoscedastic)
    if eta >= 0.5:
        raise SampleTooSmall(f"n={len(sample)} is too small for beta={beta}: eta={eta:.3f}")
    res = sigma0_envelope(sample, eta, options)
    _, _, floor = _bracket(sample)
    return C0Estimate(
        sigma0_hat=res.sigma0,
        c0_hat=_c0_from_sigma(res.sigma0, floor),
        eta_used=eta,
        mode=f"ucb({beta:g})",
        n=len(sample),
        sigma_floor=floor,
        flag=res.flag,
    )


def eta_grid(n, beta_cap=0.01, size=20, heteroscedastic=False):
    """Log-spaced candidate radii from ``1/(2n)`` to the DKW radius."""
    return np.geomspace(1 / (2 * n), dkw_eta(n, beta_cap, heteroscedastic), size)


def _fold_score(train, test, res):
    """Held-out log-likelihood of the witness mixture at ``sigma0``."""
    if res.weights is None:
        return -math.inf
    keep = res.weights > 0
    atoms, logw = res.atoms[keep], np.log(res.weights[keep])
    if train.homoscedastic and test.homoscedastic and train.sigma[0] == test.sigma[0]:
        scale = np.full(len(test), res.sigma0)
    else:
        c0 = _c0_from_sigma(res.sigma0, float(train.sigma.min()))
        scale = np.sqrt(c0**2 + test.sigma**2)
    ll = logsumexp(normal_logpdf(test.x[:, None] - atoms, scale[:, None]) + logw, axis=1)
    return float(ll.sum())


def cv_eta(sample, beta_cap=0.01, options=None, seed=None, return_scores=False):
    """Cross-validated KS radius for point estimation of ``c0``.

    Each candidate radius is scored by the held-out log-likelihood of the
    training-fold witness mixture convolved with the training-fold
    envelope.  Radii at which even the lowest ``sigma`` is infeasible
    score ``-inf``.

    Raises
    ------
    DegenerateFolds
        If ``n < 2 K`` so some fold would be too small.
    """
    options = options or NeighborhoodOptions()
    sample = _as_sample(sample)
    n, K = len(sample), int(options.cv_folds)
    if K < 2:
        raise DataError("cv_folds must be at least 2")
    if n < 2 * K:
        raise DegenerateFolds(f"n={n} is too small for {K}-fold cross-validation")
    rng = as_generator(seed)
    folds = np.array_split(rng.permutation(n), K)
    if any(f.size == 0 for f in folds):
        raise DegenerateFolds("a cross-validation fold is empty")
    grid = eta_grid(n, beta_cap, options.cv_grid, heteroscedastic=not sample.homoscedastic)
    scores = np.zeros(grid.size)
    for test_idx in folds:
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        train, test = sample.subset(mask), sample.subset(test_idx)
        prev = None
        for g, eta in enumerate(grid):
            res = sigma0_envelope(train, eta, options, _start=prev)
            scores[g] += _fold_score(train, test, res)
            prev = res
    best = float(grid[int(np.argmax(scores))])
    if return_scores:
        return best, grid, scores / K
    return best


def estimate_c0(sample, options=None, seed=None):
    """Point estimate of ``c0`` with the radius chosen by ``options.eta``."""
    options = options or NeighborhoodOptions()
    sample = _as_sample(sample)
    eta = options.eta
    if isinstance(eta, str) and eta.startswith("dkw:"):
        return c0_upper_bound(sample, float(eta[4:]), options)
    if eta == "auto-cv":
        eta = cv_eta(sample, options.beta_cap, options, seed)
    eta = float(eta)
    res = sigma0_envelope(sample, eta, options)
    _, _, floor = _bracket(sample)
    return C0Estimate(
        sigma0_hat=res.sigma0,
        c0_hat=_c0_from_sigma(res.sigma0, floor),
        eta_used=eta,
        mode="point-estimate",
        n=len(sample),
        sigma_floor=floor,
        flag=res.flag,
    )


def split_halves(n, seed=None):
    """Index sets of a split into two halves.

    ``seed=None`` gives the deterministic even/odd split; an integer seed
    gives a seeded random split into equal halves.
    """
    if seed is None:
        idx = np.arange(n)
        return idx[0::2], idx[1::2]
    perm = as_generator(seed).permutation(n)
    return np.sort(perm[: n // 2]), np.sort(perm[n // 2 :])


def default_c_grid(sample, size=21):
    """Descending grid from ``sqrt(max(var - sigma^2, 0))`` to 0."""
    sample = _as_sample(sample)
    var = float(np.var(sample.x, ddof=1))
    top = math.sqrt(max(var - float(np.mean(sample.sigma**2)), 0.0))
    return np.linspace(top, 0.0, size)


def slr_log_w(d_a, d_b, c_null, c_alt, fit_options=None):
    """``log W`` of the crossfit split likelihood ratio for one step.

    The null model has smoothing ``c_null``, the alternative ``c_alt``
    (``c_alt < c_null``, so the alternative is the larger model).
    """
    fit_options = fit_options or FitOptions()

    def log_u(d0, d1):
        alt = solve_npmle(d1, c_alt, fit_options).model
        null = solve_npmle(d0, c_null, fit_options).model
        return log_likelihood(alt, d0) - log_likelihood(null, d0)

    return float(np.logaddexp(log_u(d_a, d_b), log_u(d_b, d_a)) - math.log(2))


def c0_slr_upper_bound(sample, beta=0.05, c_grid=None, seed=None, fit_options=None, return_path=False):
    """Upper confidence bound for ``c0`` from a sequence of split LR tests.

    For ``j = 1, 2, ...`` test ``c0 >= c_j`` against ``c0 >= c_{j+1}``;
    the bound is ``c_{j-1}`` for the first non-rejected ``j``.  If the
    first test is not rejected the grid top ``c_1`` is returned; if every
    test rejects, the bound is the last positive grid value.

    Raises
    ------
    GridTooCoarse
        If ``c_grid`` has fewer than 3 points.
    """
    sample = _as_sample(sample)
    c_grid = default_c_grid(sample) if c_grid is None else np.asarray(c_grid, dtype=float)
    if c_grid.size < 3:
        raise GridTooCoarse("c_grid needs at least 3 points")
    if np.any(np.diff(c_grid) >= 0):
        raise DataError("c_grid must be strictly decreasing")
    if len(sample) < 4:
        raise SampleTooSmall("need at least 4 observations to split")
    a_idx, b_idx = split_halves(len(sample), seed)
    d_a, d_b = sample.subset(a_idx), sample.subset(b_idx)
    threshold = math.log(1 / beta)
    path = []
    bound = float(c_grid[-2])
    for j in range(c_grid.size - 1):
        log_w = slr_log_w(d_a, d_b, c_grid[j], c_grid[j + 1], fit_options)
        path.append((float(c_grid[j]), log_w))
        if log_w <= threshold:
            bound = float(c_grid[max(j - 1, 0)])
            break
    if return_path:
        return bound, path
    return bound
