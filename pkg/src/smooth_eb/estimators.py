"""scikit-learn style wrappers around the fitting, coverage and
identification routines.

Observations are one-dimensional: ``X`` may be a 1-d array or an
``(n, 1)`` column.  Noise sds are passed separately as ``sigma``.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import fresh_seed
from .coverage import DEFAULT_MC, HpdRule, calibrate_threshold
from .exceptions import DataError
from .identify import NeighborhoodOptions, c0_slr_upper_bound, c0_upper_bound, estimate_c0
from .model import Sample
from .npmle import FitOptions, log_likelihood, solve_npmle
from .posterior import posterior_mean_theta, posterior_mean_xi


def check_sample(X, sigma=None):
    """Validate ``X`` (and optional ``sigma``) into a :class:`Sample`."""
    X = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise DataError(f"X must have a single column, got {X.shape[1]}")
        X = X[:, 0]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim > 0 and sigma.shape != X.shape:
            raise DataError(f"sigma has shape {sigma.shape}, expected {X.shape}")
    return Sample(X, sigma)


class SmoothNPMLE(TransformerMixin, BaseEstimator):
    """Smooth NPMLE of the prior with empirical Bayes posterior means.

    Parameters
    ----------
    c : float or "auto"
        Smoothing scale.  ``"auto"`` estimates ``c0`` by the
        cross-validated neighborhood procedure first.
    grid_size : int, optional
    grid_pad : float
    max_iter : int
    tol : float
    solver : {"cnm", "em"}
    random_state : int, optional
        Seed for the cross-validation folds when ``c="auto"``.

    Attributes
    ----------
    model_ : SmoothModel
    c_ : float
    fit_result_ : FitResult
    c0_estimate_ : C0Estimate or None
    """

    def __init__(self, c="auto", grid_size=None, grid_pad=1.0, max_iter=2000, tol=1e-9,
                 solver="cnm", random_state=None):
        self.c = c
        self.grid_size = grid_size
        self.grid_pad = grid_pad
        self.max_iter = max_iter
        self.tol = tol
        self.solver = solver
        self.random_state = random_state

    def _options(self):
        return FitOptions(grid_size=self.grid_size, grid_pad=self.grid_pad,
                          max_iter=self.max_iter, tol=self.tol, solver=self.solver)

    def fit(self, X, y=None, sigma=None):
        sample = check_sample(X, sigma)
        self.c0_estimate_ = None
        if isinstance(self.c, str):
            if self.c != "auto":
                raise DataError(f"c must be a number or 'auto', got {self.c!r}")
            self.c0_estimate_ = estimate_c0(sample, seed=self.random_state)
            c = self.c0_estimate_.c0_hat
        else:
            c = float(self.c)
            if not c >= 0:
                raise DataError(f"c must be >= 0, got {self.c}")
        self.fit_result_ = solve_npmle(sample, c, self._options())
        self.model_ = self.fit_result_.model
        self.c_ = c
        self.n_features_in_ = 1
        return self

    def predict(self, X, sigma=None):
        """Posterior means of ``theta``."""
        check_is_fitted(self, "model_")
        s = check_sample(X, sigma)
        return posterior_mean_theta(self.model_, s.x, s.sigma)

    def transform(self, X, sigma=None):
        """Columns ``(xi_hat, theta_hat)``."""
        check_is_fitted(self, "model_")
        s = check_sample(X, sigma)
        return np.column_stack(
            [posterior_mean_xi(self.model_, s.x, s.sigma), posterior_mean_theta(self.model_, s.x, s.sigma)]
        )

    def score(self, X, y=None, sigma=None):
        """Average marginal log-likelihood."""
        check_is_fitted(self, "model_")
        s = check_sample(X, sigma)
        return log_likelihood(self.model_, s) / len(s)


class MarginalCoverageSets(BaseEstimator):
    """Calibrated optimal marginal coverage sets (or HPD sets).

    Parameters
    ----------
    beta : float
    mc_size : int
        Monte Carlo budget of the threshold calibration.
    hpd : bool
        Return highest posterior density sets instead.
    c : float or "auto"
    random_state : int, optional
        Drawn fresh and stored in ``seed_`` when omitted.

    Attributes
    ----------
    npmle_ : SmoothNPMLE
    rules_ : dict
        Calibrated rule per distinct noise sd.
    """

    def __init__(self, beta=0.05, mc_size=DEFAULT_MC, hpd=False, c="auto", grid_size=None,
                 random_state=None):
        self.beta = beta
        self.mc_size = mc_size
        self.hpd = hpd
        self.c = c
        self.grid_size = grid_size
        self.random_state = random_state

    def fit(self, X, y=None, sigma=None):
        if not 0 < self.beta < 1:
            raise DataError(f"beta must lie in (0, 1), got {self.beta}")
        self.seed_ = fresh_seed() if self.random_state is None else int(self.random_state)
        self.npmle_ = SmoothNPMLE(c=self.c, grid_size=self.grid_size, random_state=self.seed_)
        self.npmle_.fit(X, sigma=sigma)
        self.rules_ = {}
        sample = check_sample(X, sigma)
        self._calibrate(np.unique(sample.sigma))
        return self

    def _calibrate(self, levels):
        model = self.npmle_.model_
        for s in levels:
            s = float(s)
            if s in self.rules_:
                continue
            if self.hpd:
                self.rules_[s] = HpdRule(model, s, self.beta)
            else:
                # per-level seed derived from the base seed and the sd value
                sd = np.random.SeedSequence([self.seed_, int(np.float64(s).view(np.uint64))])
                self.rules_[s] = calibrate_threshold(model, s, self.beta, self.mc_size, sd)

    def predict(self, X, sigma=None):
        """List of :class:`IntervalUnion`, one per observation."""
        check_is_fitted(self, "rules_")
        s = check_sample(X, sigma)
        self._calibrate(np.unique(s.sigma))
        return [self.rules_[float(si)](xi) for xi, si in zip(s.x, s.sigma)]

    def contains(self, theta, X, sigma=None):
        """Vectorised membership ``theta_i in I(X_i)``."""
        sets = self.predict(X, sigma)
        return np.array([st.contains(t) for st, t in zip(sets, np.atleast_1d(theta))], dtype=bool)


class LargestGaussianComponent(BaseEstimator):
    """Estimate or upper-bound the largest Gaussian component ``c0``.

    Parameters
    ----------
    method : {"neighborhood", "ucb", "slr"}
        Cross-validated point estimate, DKW upper confidence bound, or
        split likelihood ratio upper bound.
    beta : float
        Level of the upper bounds.
    random_state : int, optional

    Attributes
    ----------
    c0_ : float
    estimate_ : C0Estimate or None
    """

    def __init__(self, method="neighborhood", beta=0.05, grid_size=200, random_state=None):
        self.method = method
        self.beta = beta
        self.grid_size = grid_size
        self.random_state = random_state

    def fit(self, X, y=None, sigma=None):
        sample = check_sample(X, sigma)
        opts = NeighborhoodOptions(grid_size=self.grid_size)
        self.estimate_ = None
        if self.method == "neighborhood":
            self.estimate_ = estimate_c0(sample, opts, seed=self.random_state)
            self.c0_ = self.estimate_.c0_hat
        elif self.method == "ucb":
            self.estimate_ = c0_upper_bound(sample, self.beta, opts)
            self.c0_ = self.estimate_.c0_hat
        elif self.method == "slr":
            self.c0_ = c0_slr_upper_bound(sample, self.beta, seed=self.random_state)
        else:
            raise DataError(f"unknown method {self.method!r}")
        return self
