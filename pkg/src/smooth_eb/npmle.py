"""Grid-restricted maximum likelihood for the mixing distribution of a
smoothed Gaussian location mixture.

The marginal of ``X_i`` is ``sum_j w_j N(xi_j, c^2 + sigma_i^2)``.  Weights
live on a fixed grid; two solvers are offered:

``"cnm"``
    Constrained Newton with support expansion at local maxima of the
    gradient function, followed by a monotone line search.  Converges in a
    few dozen iterations and is the default.
``"em"``
    Classical fixed-grid EM, ``w <- w * psi``.  Slow but simple; each step
    provably does not decrease the log-likelihood.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar, nnls
from scipy.special import logsumexp

from .exceptions import DataError, EmptySample, GridMismatch, ZeroSmoothing
from .model import DiscreteMixture, Grid, Sample, SmoothModel, validate_mixture

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def normal_logpdf(z, scale):
    """Log density of ``N(0, scale^2)`` at ``z`` (broadcasting)."""
    return -0.5 * (z / scale) ** 2 - np.log(scale) - LOG_SQRT_2PI


@dataclass
class FitOptions:
    """Tuning knobs for :func:`solve_npmle`.

    Parameters
    ----------
    grid_size : int, optional
        Number of grid points.  ``None`` means ``min(300, n)``.
    grid_pad : float
        The grid spans the data range widened by ``grid_pad`` times
        ``max_i sqrt(c^2 + sigma_i^2)`` on each side.
    max_iter : int
    tol : float
        Stop once the relative log-likelihood gain stays below ``tol``.
    gap_tol : float
        Stop once the dual optimality gap is at most ``gap_tol``.
    prune_eps : float
        Atoms with weight below this are dropped from the result.
    solver : {"cnm", "em"}
    """

    grid_size: int = None
    grid_pad: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-9
    gap_tol: float = 1e-7
    prune_eps: float = 1e-10
    solver: str = "cnm"

    def __post_init__(self):
        if self.grid_size is not None and int(self.grid_size) < 1:
            raise DataError("grid_size must be a positive integer")
        if self.grid_pad < 0:
            raise DataError("grid_pad must be >= 0")
        if self.solver not in ("cnm", "em"):
            raise DataError(f"unknown solver {self.solver!r}")


@dataclass
class FitResult:
    """Outcome of :func:`solve_npmle`.

    Attributes
    ----------
    mixture : DiscreteMixture
        Fitted base distribution (pruned).
    c : float
    grid : Grid
    weights_on_grid : ndarray
        Weights on every grid point, after pruning.
    log_likelihood : float
    optimality_gap : float
        ``max_j psi(xi_j) - 1`` at the returned weights; zero at the exact
        grid optimum.
    iterations : int
    converged : bool
    trace : list of float
        Log-likelihood after each iteration.
    """

    mixture: DiscreteMixture
    c: float
    grid: Grid
    weights_on_grid: np.ndarray
    log_likelihood: float
    optimality_gap: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    @property
    def model(self):
        return SmoothModel(self.mixture, self.c)


def build_grid(sample, c=0.0, options=None):
    """Equispaced grid over the data range padded by ``grid_pad`` times
    ``max_i sqrt(c^2 + sigma_i^2)`` on each side.

    The default size is ``min(300, n)``; an explicit ``grid_size`` is used
    as given.
    """
    options = options or FitOptions()
    if len(sample) == 0:
        raise EmptySample("cannot build a grid for an empty sample")
    size = options.grid_size if options.grid_size is not None else min(300, len(sample))
    size = int(size)
    s_bar = float(np.max(np.sqrt(c**2 + sample.sigma**2)))
    pad = options.grid_pad * s_bar
    lo, hi = float(sample.x.min()) - pad, float(sample.x.max()) + pad
    if size == 1:
        return Grid([(lo + hi) / 2])
    if hi <= lo:
        # identical data and no padding: fall back to one noise sd either side
        lo, hi = lo - s_bar, hi + s_bar
    return Grid(np.linspace(lo, hi, size))


def _scaled_likelihood(sample, c, points):
    """Row-scaled likelihood matrix and the log of the row scales.

    ``L[i, j] = phi_{s_i}(x_i - xi_j) / exp(r[i])`` with ``r[i]`` the row
    maximum of the log likelihood, so every row has maximum one.
    """
    s = np.sqrt(c**2 + sample.sigma**2)[:, None]
    logL = normal_logpdf(sample.x[:, None] - points[None, :], s)
    r = logL.max(axis=1)
    return np.exp(logL - r[:, None]), r


def marginal_logdensity(model, x, sigma=1.0):
    """``log f(x)`` for the smoothed model with noise sd ``sigma``."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(model.c**2 + np.asarray(sigma, dtype=float) ** 2)
    z = x[..., None] - model.atoms
    return logsumexp(
        normal_logpdf(z, np.asarray(s)[..., None]) + np.log(model.weights), axis=-1
    )


def marginal_density(model, x, sigma=1.0):
    return np.exp(marginal_logdensity(model, x, sigma))


def log_likelihood(model, sample):
    return float(np.sum(marginal_logdensity(model, sample.x, sample.sigma)))


def _gradient(L, w):
    f = L @ w
    return (L / f[:, None]).mean(axis=0), f


def _em(L, w, r, options, trace):
    ll = float(np.sum(np.log(L @ w)) + r.sum())
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        psi, _ = _gradient(L, w)
        if psi.max() - 1 <= options.gap_tol:
            converged = True
            it -= 1
            break
        w = w * psi
        w /= w.sum()
        new = float(np.sum(np.log(L @ w)) + r.sum())
        trace.append(new)
        gain = new - ll
        ll = new
        if abs(gain) <= options.tol * max(1.0, abs(ll)):
            converged = True
            break
    return w, it, converged


def _vertex_step(L, w, j):
    """Best move of mass from ``w`` towards the point mass at grid index ``j``."""
    lj = L[:, j]
    f = L @ w

    def neg_ll(lam):
        return -float(np.sum(np.log((1 - lam) * f + lam * lj)))

    lam = minimize_scalar(neg_ll, bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12}).x
    cand = (1 - lam) * w
    cand[j] += lam
    fc = L @ cand
    return cand, fc, float(np.sum(np.log(fc)))


def _cnm(L, w, r, options, trace):
    n, m = L.shape
    f = L @ w
    ll = float(np.sum(np.log(f)))
    penalty = 1e3 * math.sqrt(n)
    target = np.r_[2.0 * np.ones(n), penalty]
    stalls = 0
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        psi = (L / f[:, None]).mean(axis=0)
        if psi.max() - 1 <= options.gap_tol:
            converged = True
            it -= 1
            break
        left = np.r_[-np.inf, psi[:-1]]
        right = np.r_[psi[1:], -np.inf]
        peaks = np.nonzero((psi >= left) & (psi >= right) & (psi > 1))[0]
        active = np.union1d(np.nonzero(w > 0)[0], peaks)
        S = np.vstack([L[:, active] / f[:, None], penalty * np.ones(active.size)])
        a, _ = nnls(S, target, maxiter=50 * active.size)
        if a.sum() <= 0:
            break
        d = np.zeros(m)
        d[active] = a / a.sum()
        lam = 1.0
        while True:
            cand = (1 - lam) * w + lam * d
            fc = L @ cand
            llc = float(np.sum(np.log(fc)))
            if llc >= ll or lam < 1e-10:
                break
            lam /= 2
        if llc < ll:
            # no ascent along the Newton direction; fall back to one EM step
            cand = w * psi
            cand /= cand.sum()
            fc = L @ cand
            llc = float(np.sum(np.log(fc)))
        cand[cand < 1e-15] = 0.0
        cand /= cand.sum()
        fc = L @ cand
        llc = float(np.sum(np.log(fc)))
        if llc - ll <= options.tol * max(1.0, abs(ll + r.sum())):
            # badly scaled Newton systems can stall far from the optimum;
            # a vertex-direction step always ascends while max psi > 1
            vc, vf, vll = _vertex_step(L, w, int(np.argmax(psi)))
            if vll > llc:
                cand, fc, llc = vc, vf, vll
        gain = llc - ll
        if gain < 0:
            # pruning round-off cost more than the step gained
            break
        w, f, ll = cand, fc, llc
        trace.append(ll + float(r.sum()))
        if gain <= options.tol * max(1.0, abs(ll + r.sum())):
            stalls += 1
            if stalls >= 3:
                converged = True
                break
        else:
            stalls = 0
    return w, it, converged


def solve_npmle(sample, c, options=None, grid=None):
    """Maximise the smoothed-mixture log-likelihood over grid weights.

    Parameters
    ----------
    sample : Sample
    c : float
        Smoothing scale, ``>= 0``.  Zero gives the ordinary NPMLE.
    options : FitOptions, optional
    grid : Grid, optional
        Overrides the grid implied by ``options``.

    Returns
    -------
    FitResult
    """
    options = options or FitOptions()
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    c = float(c)
    if not math.isfinite(c) or c < 0:
        raise DataError(f"c must be finite and >= 0, got {c}")
    if grid is None:
        grid = build_grid(sample, c, options)
    points = grid.points
    L, r = _scaled_likelihood(sample, c, points)
    m = points.size
    if options.solver == "em":
        w = np.full(m, 1.0 / m)
    else:
        # support expansion adds atoms where the gradient peaks
        w = np.zeros(m)
        w[np.argmin(np.abs(points - np.mean(sample.x)))] = 1.0
    trace = [float(np.sum(np.log(L @ w)) + r.sum())]
    if options.solver == "em":
        w, iters, converged = _em(L, w, r, options, trace)
    else:
        w, iters, converged = _cnm(L, w, r, options, trace)

    w = np.where(w < options.prune_eps, 0.0, w)
    w /= w.sum()
    psi, f = _gradient(L, w)
    ll = float(np.sum(np.log(f)) + r.sum())
    keep = w > 0
    mixture = validate_mixture(points[keep], w[keep])
    return FitResult(
        mixture=mixture,
        c=c,
        grid=grid,
        weights_on_grid=w,
        log_likelihood=ll,
        optimality_gap=float(psi.max() - 1.0),
        iterations=iters,
        converged=converged,
        trace=trace,
    )


def certify_optimality(mixture, sample, c, grid):
    """Dual gap ``max_j psi(xi_j) - 1`` of ``mixture`` over ``grid``.

    ``psi(xi) = (1/n) sum_i phi_{s_i}(x_i - xi) / f(x_i)``.  The weights are
    the grid optimum exactly when the gap is zero.

    Raises
    ------
    GridMismatch
        If some atom of ``mixture`` is not a grid point.
    """
    mixture = getattr(mixture, "mixture", mixture)
    points = grid.points
    idx = np.searchsorted(points, mixture.atoms)
    idx = np.clip(idx, 0, points.size - 1)
    near = np.where(
        (idx > 0) & (np.abs(points[idx - 1] - mixture.atoms) < np.abs(points[idx] - mixture.atoms)),
        idx - 1,
        idx,
    )
    scale = max(1.0, float(np.max(np.abs(points))))
    if np.any(np.abs(points[near] - mixture.atoms) > 1e-9 * scale):
        raise GridMismatch("mixture has atoms off the certification grid")
    w = np.zeros(points.size)
    np.add.at(w, near, mixture.weights)
    L, _ = _scaled_likelihood(sample, c, points)
    psi, _ = _gradient(L, w)
    return float(psi.max() - 1.0)


def require_positive_c(c):
    if c <= 0:
        raise ZeroSmoothing("this operation needs a smoothing scale c > 0")
    return float(c)
