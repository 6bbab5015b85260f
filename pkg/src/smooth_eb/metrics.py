"""Distances between densities on the real line and between posterior
families, by composite Simpson quadrature."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .npmle import marginal_logdensity, normal_logpdf, require_positive_c
from .posterior import prior_logdensity

DEFAULT_NODES = 4001


@dataclass(frozen=True)
class DensityFn:
    """A density evaluator with a window holding essentially all its mass.

    Parameters
    ----------
    fn : callable
        Vectorised ``t -> density(t)``.
    lo, hi : float
        Quadrature window.
    """

    fn: object
    lo: float
    hi: float

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    @classmethod
    def gaussian(cls, mean=0.0, sd=1.0, width=10.0):
        return cls(
            lambda t: np.exp(normal_logpdf(t - mean, sd)), mean - width * sd, mean + width * sd
        )

    @classmethod
    def prior(cls, model, width=10.0):
        """Smoothed prior ``g`` of a :class:`SmoothModel` (needs ``c > 0``)."""
        c = require_positive_c(model.c)
        return cls(
            lambda t: np.exp(prior_logdensity(model, t)),
            float(model.atoms[0] - width * c),
            float(model.atoms[-1] + width * c),
        )

    @classmethod
    def marginal(cls, model, sigma=1.0, width=10.0):
        """Marginal density ``f`` of ``X`` with noise sd ``sigma``."""
        s = math.sqrt(model.c**2 + sigma**2)
        return cls(
            lambda t: np.exp(marginal_logdensity(model, t, sigma)),
            float(model.atoms[0] - width * s),
            float(model.atoms[-1] + width * s),
        )


def _nodes(f, g, n):
    lo, hi = min(f.lo, g.lo), max(f.hi, g.hi)
    t = np.linspace(lo, hi, n if n % 2 else n + 1)
    return t, f(t), g(t)


def integrate(values, t):
    return float(simpson(values, x=t))


def hellinger_sq(f, g, n=DEFAULT_NODES):
    """Squared Hellinger distance ``0.5 * int (sqrt f - sqrt g)^2``."""
    t, a, b = _nodes(f, g, n)
    return float(min(max(0.5 * integrate((np.sqrt(a) - np.sqrt(b)) ** 2, t), 0.0), 1.0))


def tv(f, g, n=DEFAULT_NODES):
    """Total variation ``0.5 * int |f - g|``."""
    t, a, b = _nodes(f, g, n)
    return float(min(max(0.5 * integrate(np.abs(a - b), t), 0.0), 1.0))


def l1(f, g, n=DEFAULT_NODES):
    return 2.0 * tv(f, g, n)


def l2_sq(f, g, n=DEFAULT_NODES):
    """Squared L2 distance ``int (f - g)^2``."""
    t, a, b = _nodes(f, g, n)
    return max(integrate((a - b) ** 2, t), 0.0)


def wtv(model_a, model_b, weight_model, sigma_i=1.0, n_x=801, n_theta=DEFAULT_NODES, width=10.0):
    """Weighted total variation between two posterior families.

    ``int TV(pi_a(. | x), pi_b(. | x)) f_w(x) dx`` with ``f_w`` the marginal
    density of ``weight_model``.  Inner and outer integrals use Simpson's
    rule; the theta window follows the posterior means across the x window.
    """
    for m in (model_a, model_b, weight_model):
        require_positive_c(m.c)
    fw = DensityFn.marginal(weight_model, sigma_i, width)
    x = np.linspace(fw.lo, fw.hi, n_x if n_x % 2 else n_x + 1)
    lo_atom = min(model_a.atoms[0], model_b.atoms[0])
    hi_atom = max(model_a.atoms[-1], model_b.atoms[-1])
    bounds = []
    for m in (model_a, model_b):
        alpha = m.c**2 / (m.c**2 + sigma_i**2)
        tau = math.sqrt(alpha) * sigma_i
        bounds.append(alpha * x[0] + (1 - alpha) * lo_atom - width * tau)
        bounds.append(alpha * x[-1] + (1 - alpha) * hi_atom + width * tau)
    theta = np.linspace(min(bounds), max(bounds), n_theta if n_theta % 2 else n_theta + 1)

    def post(m):
        return np.exp(
            normal_logpdf(x[:, None] - theta[None, :], sigma_i)
            + prior_logdensity(m, theta)[None, :]
            - marginal_logdensity(m, x, sigma_i)[:, None]
        )

    inner = 0.5 * simpson(np.abs(post(model_a) - post(model_b)), x=theta, axis=1)
    inner = np.clip(inner, 0.0, 1.0)
    return float(min(max(integrate(inner * fw(x), x), 0.0), 1.0))
