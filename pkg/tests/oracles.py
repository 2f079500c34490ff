"""Brute-force constructions used as independent references in the tests.

Every marginal likelihood here is built directly from the joint density of
the observed point and its latent abscissa, then integrated (or maximised)
numerically. Nothing is shared with the library's closed forms.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, optimize


_LOG2PI = np.log(2.0 * np.pi)


def norm_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * _LOG2PI - np.log(sd) - 0.5 * z * z


def _log_quad(logf, lo, hi, points):
    """log of the integral of exp(logf) over [lo, hi], rescaled at its peak."""
    grid = np.linspace(lo, hi, 4001)
    peak = max(np.max(logf(grid)), max(float(logf(p)) for p in points))
    val, _ = integrate.quad(lambda t: np.exp(logf(t) - peak), lo, hi, points=sorted(points),
                            epsabs=0.0, epsrel=1e-13, limit=1000)
    return peak + np.log(val)


def joint_point_logpdf(xt, x, y, sx, sy, sigma_int, slope, intercept):
    s = np.sqrt(sy**2 + sigma_int**2)
    return norm_logpdf(x, xt, sx) + norm_logpdf(y, slope * xt + intercept, s)


def _bounds(x, sx, extra=()):
    centres = [x, *extra]
    width = 40.0 * max(sx, 1.0)
    return min(centres) - width, max(centres) + width


def unif_point_quad(x, y, sx, sy, sigma_int, slope, intercept):
    """log of the integral over the latent abscissa with a flat prior."""
    lo, hi = _bounds(x, sx)
    return _log_quad(lambda t: joint_point_logpdf(t, x, y, sx, sy, sigma_int, slope, intercept), lo, hi, [x])


def gmm_point_quad(x, y, sx, sy, sigma_int, slope, intercept, weights, mus, widths):
    """log of the integral with a Gaussian-mixture prior on the latent abscissa."""
    weights, mus, widths = (np.atleast_1d(v) for v in (weights, mus, widths))

    def logf(t):
        t = np.asarray(t, dtype=float)
        comp = np.log(weights) + norm_logpdf(t[..., None], mus, widths)
        prior = np.logaddexp.reduce(comp, axis=-1)
        return joint_point_logpdf(t, x, y, sx, sy, sigma_int, slope, intercept) + prior

    lo, hi = _bounds(x, max(sx, np.max(widths)), mus)
    return _log_quad(logf, lo, hi, [x, *mus])


def prof_point_max(x, y, sx, sy, sigma_int, slope, intercept):
    """Maximum over the latent abscissa of the joint log density, found numerically."""
    res = optimize.minimize_scalar(lambda t: -joint_point_logpdf(t, x, y, sx, sy, sigma_int, slope, intercept),
                                   bracket=(x - sx, x + sx), tol=1e-14)
    return -res.fun


def prof_point_closed(x, y, sx, sy, sigma_int, slope, intercept):
    """Joint log density at the precision-weighted latent position."""
    s2 = sy**2 + sigma_int**2
    xt = (x * s2 + slope * (y - intercept) * sx**2) / (s2 + slope**2 * sx**2)
    return joint_point_logpdf(xt, x, y, sx, sy, sigma_int, slope, intercept)


class _Gauss4:
    """Zero-mean 4-D Gaussian log density with a precomputed inverse."""

    def __init__(self, cov):
        self.prec = np.linalg.inv(cov)
        self.const = -0.5 * (4 * _LOG2PI + np.linalg.slogdet(cov)[1])

    def __call__(self, r):
        return self.const - 0.5 * float(r @ self.prec @ r)


def _pair_setup(x, y, cov, sigma_int):
    cov = np.array(cov, dtype=float)
    cov[2, 2] += sigma_int**2
    cov[3, 3] += sigma_int**2
    return cov, np.r_[x, y], _Gauss4(cov)


def dense_pair_quad(x, y, cov, sigma_int, slope, intercept, mu=None, w=None):
    """Two-point marginal with a dense 4x4 covariance, by 2-D quadrature.

    With ``mu``/``w`` the latent abscissae get independent N(mu, w) priors,
    otherwise a flat prior.
    """
    cov, data, gauss = _pair_setup(x, y, cov, sigma_int)

    def logf(t1, t2):
        mean = np.array([t1, t2, slope * t1 + intercept, slope * t2 + intercept])
        out = gauss(data - mean)
        if mu is not None:
            out += norm_logpdf(t1, mu, w) + norm_logpdf(t2, mu, w)
        return out

    # centre and scale from a numeric mode search
    res = optimize.minimize(lambda t: -logf(*t), x0=np.asarray(x, dtype=float), method="BFGS")
    peak = -res.fun
    half = 12.0 * np.sqrt(np.max(np.diag(cov)))
    lo, hi = res.x - half, res.x + half
    val, _ = integrate.dblquad(lambda t2, t1: np.exp(logf(t1, t2) - peak), lo[0], hi[0], lo[1], hi[1],
                               epsabs=0.0, epsrel=1e-10)
    return peak + np.log(val)


def dense_pair_max(x, y, cov, sigma_int, slope, intercept):
    """Maximum over both latent abscissae of the two-point joint log density."""
    cov, data, gauss = _pair_setup(x, y, cov, sigma_int)

    def negf(t):
        mean = np.array([t[0], t[1], slope * t[0] + intercept, slope * t[1] + intercept])
        return -gauss(data - mean)

    res = optimize.minimize(negf, x0=np.asarray(x, dtype=float), method="BFGS", options={"gtol": 1e-12})
    return -res.fun


def random_dense_cov(rng, n=2, scale=0.5):
    """Random symmetric positive-definite (2n x 2n) covariance."""
    m = rng.normal(scale=scale, size=(2 * n, 2 * n))
    return m @ m.T + 0.05 * np.eye(2 * n)
