"""Prior and posterior quantities of a smoothed Gaussian mixture model.

For ``theta ~ sum_j w_j N(xi_j, c^2)`` and ``X | theta ~ N(theta, sigma^2)``
the posterior of ``theta`` is again a Gaussian mixture:

    theta | X = x  ~  sum_j p_j(x) N(alpha x + (1 - alpha) xi_j, alpha sigma^2)

with ``alpha = c^2 / (c^2 + sigma^2)`` and ``p_j(x)`` proportional to
``w_j phi_s(x - xi_j)``, ``s^2 = c^2 + sigma^2``.
"""
import math

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .model import Sample
from .npmle import marginal_logdensity, normal_logpdf, require_positive_c


def prior_logdensity(model, theta):
    """``log g(theta)``; requires ``c > 0``."""
    c = require_positive_c(model.c)
    theta = np.asarray(theta, dtype=float)
    return logsumexp(
        normal_logpdf(theta[..., None] - model.atoms, c) + np.log(model.weights), axis=-1
    )


def prior_density(model, theta):
    return np.exp(prior_logdensity(model, theta))


def posterior_components(model, x, sigma=1.0):
    """Mixture representation of the posterior at ``x``.

    Returns
    -------
    weights : ndarray, shape (..., k)
    means : ndarray, shape (..., k)
    sd : ndarray, shape (...)
        Common component standard deviation ``sqrt(alpha) * sigma``.
    """
    require_positive_c(model.c)
    x, sigma = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(sigma, dtype=float))
    alpha = model.c**2 / (model.c**2 + sigma**2)
    means = alpha[..., None] * x[..., None] + (1 - alpha[..., None]) * model.atoms
    return _atom_weights(model, x, sigma), means, np.sqrt(alpha) * sigma


def posterior_logdensity(model, theta, x, sigma=1.0):
    """``log pi(theta | x)`` by Bayes' rule, broadcasting over all inputs."""
    theta = np.asarray(theta, dtype=float)
    return (
        normal_logpdf(np.asarray(x) - theta, np.asarray(sigma, dtype=float))
        + prior_logdensity(model, theta)
        - marginal_logdensity(model, x, sigma)
    )


def posterior_density(model, theta, x, sigma=1.0):
    return np.exp(posterior_logdensity(model, theta, x, sigma))


def posterior_cdf(model, theta, x, sigma=1.0):
    """Posterior distribution function, exact via the mixture form."""
    p, mu, sd = posterior_components(model, x, sigma)
    theta = np.asarray(theta, dtype=float)
    z = (theta[..., None] - mu) / np.asarray(sd)[..., None]
    return np.sum(p * np.exp(log_ndtr(z)), axis=-1)


def posterior_peak_bound(model, sigma=1.0):
    """Upper bound ``(2 pi alpha sigma^2)^(-1/2)`` on any posterior density."""
    c = require_positive_c(model.c)
    sigma = np.asarray(sigma, dtype=float)
    alpha = c**2 / (c**2 + sigma**2)
    return 1.0 / np.sqrt(2 * math.pi * alpha * sigma**2)


def posterior_window(model, x, sigma=1.0, width=8.0, min_weight=1e-12):
    """Interval holding ``width`` component sds around every component
    carrying posterior weight at least ``min_weight``."""
    p, mu, sd = posterior_components(model, x, sigma)
    live = p >= min_weight * p.max()
    return float(mu[live].min() - width * sd), float(mu[live].max() + width * sd)


def _atom_weights(model, x, sigma):
    x, sigma = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(sigma, dtype=float))
    s = np.sqrt(model.c**2 + sigma**2)
    logp = normal_logpdf(x[..., None] - model.atoms, s[..., None]) + np.log(model.weights)
    logp -= logsumexp(logp, axis=-1, keepdims=True)
    return np.exp(logp)


def posterior_mean_xi(model, x, sigma=1.0):
    """``E[xi | X = x]``; also valid for ``c = 0``."""
    return np.sum(_atom_weights(model, x, sigma) * model.atoms, axis=-1)


def posterior_mean_theta(model, x, sigma=1.0):
    """``E[theta | X = x] = alpha x + (1 - alpha) E[xi | X = x]``."""
    x = np.asarray(x, dtype=float)
    alpha = model.c**2 / (model.c**2 + np.asarray(sigma, dtype=float) ** 2)
    return alpha * x + (1 - alpha) * posterior_mean_xi(model, x, sigma)


def denoise(model, sample):
    """Posterior means for every observation in ``sample``."""
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    return posterior_mean_theta(model, sample.x, sample.sigma)


class PosteriorAt:
    """Posterior of ``theta`` given one observation, bound for repeated use.

    Parameters
    ----------
    model : SmoothModel
        Needs ``c > 0``.
    x : float
    sigma_i : float
    """

    def __init__(self, model, x, sigma_i=1.0):
        require_positive_c(model.c)
        self.model, self.x, self.sigma_i = model, float(x), float(sigma_i)

    def __repr__(self):
        return f"PosteriorAt(x={self.x!r}, sigma_i={self.sigma_i!r})"

    def pdf(self, theta):
        return posterior_density(self.model, theta, self.x, self.sigma_i)

    def logpdf(self, theta):
        return posterior_logdensity(self.model, theta, self.x, self.sigma_i)

    def cdf(self, theta):
        return posterior_cdf(self.model, theta, self.x, self.sigma_i)

    def mean(self):
        return float(posterior_mean_theta(self.model, self.x, self.sigma_i))

    def window(self, width=8.0):
        return posterior_window(self.model, self.x, self.sigma_i, width)
