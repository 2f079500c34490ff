"""Log-likelihood kernels for the four latent-x treatments.

The diagonal path works point by point with per-point errors. A nonlinear
curve enters through its tangent line at each observed x, so that every point
has its own slope ``a_i`` and intercept ``b_i``. The general path handles a
full ``2N x 2N`` covariance and an arbitrary Jacobian through Cholesky
factorisations.

Throughout, ``s`` denotes the total y variance ``sigma_y**2 + sigma_int**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, special

from .core import Dataset, assemble_covariance
from .models import ModelFunction, _lin_f, linear

_LOG_2PI = np.log(2.0 * np.pi)


class LikelihoodDomainError(ValueError):
    """A variance or width that must be positive is not."""


class SingularCovarianceError(LikelihoodDomainError):
    """A matrix that must be positive definite failed to factorise."""


@dataclass(frozen=True)
class LinearisedModel:
    """Tangent-line approximation of a model around the observed x.

    ``G`` is a vector of per-point slopes for pointwise models and the dense
    Jacobian otherwise. ``intercepts`` are ``f(x_o) - slope * x_o`` and are
    only defined in the pointwise case.
    """

    f_at_xo: np.ndarray
    G: np.ndarray
    intercepts: Optional[np.ndarray]

    @property
    def is_diagonal(self) -> bool:
        return self.G.ndim == 1

    def dense_G(self) -> np.ndarray:
        return np.diag(self.G) if self.G.ndim == 1 else self.G


def linearise(model: ModelFunction, x, theta) -> LinearisedModel:
    """Evaluate ``model`` and its x-derivative at the observed abscissae."""
    if model.pointwise:
        f, slopes, icpt = model.linearise(x, theta)
        return LinearisedModel(f, slopes, icpt)
    return LinearisedModel(model.eval(x, theta), model.jacobian(x, theta), None)


# --- per-point building blocks ---------------------------------------------

def _point_terms(model, d, theta, sigma_int):
    model = model or linear()
    x, y = d.x_obs, d.y_obs
    sx2 = d.x_var
    s = d.y_var + sigma_int * sigma_int
    if model.func is _lin_f:
        # straight line: slope and intercept are shared scalars
        return model, x, y, sx2, s, float(theta[0]), float(theta[1])
    f, a, b = model.linearise(x, theta)
    return model, x, y, sx2, s, a, b


def _unif_terms(x, y, sx2, s, a, b, grad=False, prof=False, x_norm=False):
    V = a * a * sx2 + s
    r = a * x + b - y
    if np.any(V <= 0) or (prof and np.any(s <= 0)):
        raise LikelihoodDomainError("non-positive variance in likelihood")
    if prof:
        ll = -0.5 * (_LOG_2PI + np.log(s)) - 0.5 * r * r / V
        if x_norm:
            pos = sx2 > 0
            ll = ll - 0.5 * np.where(pos, _LOG_2PI + np.log(np.where(pos, sx2, 1.0)), 0.0)
    else:
        ll = -0.5 * (_LOG_2PI + np.log(V)) - 0.5 * r * r / V
    if not grad:
        return ll
    V_a = 2 * a * sx2
    q = 0.5 * r * r / (V * V)
    d_a = q * V_a - r * x / V
    d_s = q.copy()
    if prof:
        d_s -= 0.5 / s
    else:
        d_a -= 0.5 * V_a / V
        d_s -= 0.5 / V
    d_b = -r / V
    return ll, d_a, d_b, d_s


def _mnr_terms(x, y, sx2, s, a, b, mu, w, grad=False):
    w2 = w * w
    a2sx2 = a * a * sx2
    D = w2 * (a2sx2 + s) + s * sx2
    if D.min() <= 0:
        raise LikelihoodDomainError("non-positive determinant in mnr likelihood")
    r1 = a * x + b - y
    r2 = a * mu + b - y
    r3 = x - mu
    w2r1 = w2 * r1
    sx2r2 = sx2 * r2
    num = w2r1 * r1 + sx2r2 * r2 + s * r3 * r3
    invD = 1.0 / D
    q = num * invD
    ll = -_LOG_2PI - 0.5 * (np.log(D) + q)
    if not grad:
        return ll
    c = -0.5 * invD * (1.0 - q)
    h = -invD  # -(1/2) * 2 / D
    d_a = c * (2 * a * w2 * sx2) + h * (w2r1 * x + sx2r2 * mu)
    d_b = h * (w2r1 + sx2r2)
    d_s = c * (w2 + sx2) - 0.5 * invD * (r3 * r3)
    d_mu = h * (sx2r2 * a - s * r3)
    d_w = c * (2 * w * (a2sx2 + s)) + h * (w * r1 * r1)
    return ll, d_a, d_b, d_s, d_mu, d_w


def _unif_linear_sums(x, y, sx2, s, a, b, prof=False):
    """Summed log-likelihood and gradient ``(ll, d_a, d_b, d_s)`` for a
    straight line under the uniform (or, with ``prof``, profile) treatment.
    The profile variant omits the x normalisation."""
    V = (a * a) * sx2
    V += s
    if V.min() <= 0 or (prof and s.min() <= 0):
        raise LikelihoodDomainError("non-positive variance in likelihood")
    iV = 1.0 / V
    r = a * x - y
    r += b
    u = r * iV
    u2 = u * u
    rq = r @ u
    if prof:
        ll = -0.5 * (x.size * _LOG_2PI + np.sum(np.log(s)) + rq)
        d_a = a * (u2 @ sx2) - u @ x
        d_s = 0.5 * (u2.sum() - np.sum(1.0 / s))
    else:
        ll = -0.5 * (x.size * _LOG_2PI + np.sum(np.log(V)) + rq)
        d_a = a * ((u2 - iV) @ sx2) - u @ x
        d_s = 0.5 * (u2.sum() - iV.sum())
    return ll, d_a, -u.sum(), d_s


def _mnr_linear_sums(x, y, sx2, s, a, b, mu, w):
    """Summed log-likelihood and gradient for a straight line and one Gaussian.

    Same quantities as :func:`_mnr_terms` with ``grad=True`` summed over
    points, computed with fewer temporaries; returns
    ``(ll, d_a, d_b, d_s, d_mu, d_w)`` where ``d_s`` is the summed
    derivative with respect to the per-point y variance.
    """
    w2 = w * w
    r1 = a * x - y
    r1 += b
    r3 = x - mu
    r2 = r1 - a * r3
    P = (a * a) * sx2 + s
    D = s * sx2
    D += w2 * P
    if D.min() <= 0:
        raise LikelihoodDomainError("non-positive determinant in mnr likelihood")
    invD = 1.0 / D
    r1sq, r3sq = r1 * r1, r3 * r3
    num = w2 * r1sq
    num += sx2 * (r2 * r2)
    num += s * r3sq
    q = num * invD
    ll = -x.size * _LOG_2PI - 0.5 * (np.sum(np.log(D)) + q.sum())
    cc = invD * (1.0 - q)
    u1 = invD * r1
    isx2 = invD * sx2
    u2 = isx2 @ r2
    cc_sx2 = cc @ sx2
    d_a = -a * w2 * cc_sx2 - w2 * (u1 @ x) - mu * u2
    d_b = -w2 * u1.sum() - u2
    d_s = -0.5 * (w2 * cc.sum() + cc_sx2 + invD @ r3sq)
    d_mu = -a * u2 + (invD * s) @ r3
    d_w = -w * (cc @ P) - w * (invD @ r1sq)
    return ll, d_a, d_b, d_s, d_mu, d_w


def _check_components(mu, w, weights):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    weights = np.full(mu.size, 1.0 / mu.size) if weights is None else np.atleast_1d(np.asarray(weights, dtype=float))
    if not (mu.size == w.size == weights.size):
        raise ValueError("mu, w and weights must have equal length")
    if w.min() <= 0:
        raise LikelihoodDomainError("component widths must be strictly positive")
    if weights.min() < 0:
        raise LikelihoodDomainError("component weights must be non-negative")
    return mu, w, weights


# --- public diagonal kernels -------------------------------------------------

def loglike_unif_diag(d: Dataset, theta, sigma_int, model: ModelFunction = None) -> float:
    """Log-likelihood with an infinite uniform prior on the latent x."""
    _, x, y, sx2, s, a, b = _point_terms(model, d, theta, sigma_int)
    return float(np.sum(_unif_terms(x, y, sx2, s, a, b)))


def loglike_prof_diag(d: Dataset, theta, sigma_int, model: ModelFunction = None,
                      include_x_norm: bool = False) -> float:
    """Profile log-likelihood with each latent x at its conditional maximum.

    The normalisation only carries the y variance. With ``include_x_norm``
    the ``-log(2 pi sigma_x^2) / 2`` terms of the full likelihood are added
    too (points with zero x error contribute nothing), giving the exact
    maximum of the full likelihood over the latent x. This is not a
    normalised density in the data.
    """
    _, x, y, sx2, s, a, b = _point_terms(model, d, theta, sigma_int)
    return float(np.sum(_unif_terms(x, y, sx2, s, a, b, prof=True, x_norm=include_x_norm)))


def loglike_mnr_diag(d: Dataset, theta, sigma_int, mu, w, model: ModelFunction = None) -> float:
    """Log-likelihood with a Gaussian N(mu, w^2) prior on the latent x, integrated out."""
    if w <= 0:
        raise LikelihoodDomainError("w must be strictly positive")
    _, x, y, sx2, s, a, b = _point_terms(model, d, theta, sigma_int)
    return float(np.sum(_mnr_terms(x, y, sx2, s, a, b, float(mu), float(w))))


def loglike_gmm_diag(d: Dataset, theta, sigma_int, weights, mu, w, model: ModelFunction = None) -> float:
    """Log-likelihood with a Gaussian-mixture prior on the latent x.

    Per point the component terms are combined with a max-subtracted
    log-sum-exp.
    """
    mu, w, weights = _check_components(mu, w, weights)
    _, x, y, sx2, s, a, b = _point_terms(model, d, theta, sigma_int)
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    comp = np.stack([_mnr_terms(x, y, sx2, s, a, b, mu[k], w[k]) + logw[k] for k in range(mu.size)])
    return float(np.sum(special.logsumexp(comp, axis=0)))


def diag_loglike_and_grad(method, d: Dataset, theta, sigma_int, mu=None, w=None, weights=None,
                          model: ModelFunction = None, include_x_norm: bool = False, check: bool = True):
    """Diagonal log-likelihood together with its analytic gradient.

    Returns ``(loglike, grads)`` where ``grads`` maps ``theta``,
    ``sigma_int``, ``mu``, ``w`` and ``weights`` to arrays (the last three only
    for mnr/gmm). Model parameter derivatives come from
    ``model.param_grad``. ``check=False`` skips validation of the mixture
    components for callers that already guarantee them.
    """
    model, x, y, sx2, s, a, b = _point_terms(model, d, theta, sigma_int)
    grads = {}
    if method in ("unif", "prof"):
        ll, d_a, d_b, d_s = _unif_terms(x, y, sx2, s, a, b, grad=True, prof=method == "prof",
                                        x_norm=include_x_norm)
    elif method in ("mnr", "gmm"):
        if check:
            mu, w, weights = _check_components(mu, w, weights)
        K = mu.size
        if K == 1 and np.ndim(a) == 0:
            ll, sa, sb, ss, smu, sw = _mnr_linear_sums(x, y, sx2, s, a, b, mu[0], w[0])
            if weights[0] != 1.0:
                ll += x.size * np.log(weights[0])
            grads = {"mu": np.array([smu]), "w": np.array([sw]), "weights": np.array([float(x.size) / weights[0]]),
                     "theta": np.array([sa, sb]), "sigma_int": float(ss * 2 * sigma_int)}
            return float(ll), grads
        if K == 1:
            ll, d_a, d_b, d_s, d_mu, d_w = _mnr_terms(x, y, sx2, s, a, b, mu[0], w[0], grad=True)
            if weights[0] != 1.0:
                ll = ll + np.log(weights[0])
            grads["mu"] = np.array([d_mu.sum()])
            grads["w"] = np.array([d_w.sum()])
            grads["weights"] = np.array([float(x.size) / weights[0]])
        else:
            logw = np.log(np.maximum(weights, 1e-300))
            parts = [_mnr_terms(x, y, sx2, s, a, b, mu[k], w[k], grad=True) for k in range(K)]
            comp = np.stack([p[0] + logw[k] for k, p in enumerate(parts)])
            top = comp.max(axis=0)
            expd = np.exp(comp - top)
            tot = expd.sum(axis=0)
            ll = top + np.log(tot)
            resp = expd / tot
            d_a = sum(resp[k] * parts[k][1] for k in range(K))
            d_b = sum(resp[k] * parts[k][2] for k in range(K))
            d_s = sum(resp[k] * parts[k][3] for k in range(K))
            grads["mu"] = np.array([resp[k] @ parts[k][4] for k in range(K)])
            grads["w"] = np.array([resp[k] @ parts[k][5] for k in range(K)])
            grads["weights"] = resp.sum(axis=1) / np.maximum(weights, 1e-300)
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.ndim(a) == 0:
        grads["theta"] = np.array([np.sum(d_a), np.sum(d_b)])
    else:
        df, dslope = model.param_grad(x, np.asarray(theta, dtype=float))
        # b_i = f_i - a_i x_i
        grads["theta"] = (d_a - d_b * x) @ dslope + d_b @ df
    grads["sigma_int"] = float(d_s.sum() * 2 * sigma_int)
    return float(ll.sum()), grads


# --- hierarchical hyperprior --------------------------------------------------

def scaled_inv_chi2_logpdf(x, nu, scale2):
    """Log-density of the scaled inverse chi-squared distribution at ``x``."""
    x = np.asarray(x, dtype=float)
    if scale2 <= 0 or nu <= 0:
        raise LikelihoodDomainError("scaled inverse chi-squared needs positive nu and scale")
    if np.any(x <= 0):
        return -np.inf
    half = 0.5 * nu
    return (half * np.log(half * scale2) - special.gammaln(half)
            - (1 + half) * np.log(x) - half * scale2 / x)


def hierarchical_hyperprior_logdensity(mu, w, mu_star, u_star2, w_star2, grad=False):
    """Log-density of the hierarchical prior on mixture means and widths.

    Each mean ``mu_k ~ N(mu_star, u_star2)``, each variance
    ``w_k**2 ~ ScaledInvChi2(1, w_star2)`` and ``u_star2 ~ ScaledInvChi2(1,
    w_star2)``. ``mu_star`` and ``w_star2`` have flat priors. The density is
    over the variances ``w_k**2``; callers sampling the widths must add the
    ``log(2 w_k)`` Jacobian themselves.

    With ``grad=True`` also returns a dict of derivatives with respect to
    ``mu``, ``w`` (through ``w**2``), ``mu_star``, ``u_star2`` and ``w_star2``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if u_star2 <= 0 or w_star2 <= 0:
        raise LikelihoodDomainError("hyperprior scales must be strictly positive")
    if np.any(w <= 0):
        raise LikelihoodDomainError("component widths must be strictly positive")
    dev = mu - mu_star
    w2 = w * w
    lp = float(np.sum(-0.5 * (_LOG_2PI + np.log(u_star2)) - 0.5 * dev**2 / u_star2))
    lp += float(np.sum(scaled_inv_chi2_logpdf(w2, 1.0, w_star2)))
    lp += float(scaled_inv_chi2_logpdf(u_star2, 1.0, w_star2))
    if not grad:
        return lp
    dchi = lambda v: -1.5 / v + 0.5 * w_star2 / v**2  # noqa: E731
    g = {
        "mu": -dev / u_star2,
        "w": dchi(w2) * 2 * w,
        "mu_star": float(np.sum(dev) / u_star2),
        "u_star2": float(np.sum(-0.5 / u_star2 + 0.5 * dev**2 / u_star2**2) + dchi(u_star2)),
        "w_star2": float(np.sum(0.5 / w_star2 - 0.5 / w2) + 0.5 / w_star2 - 0.5 / u_star2),
    }
    return lp, g


# --- general covariance path -------------------------------------------------

def _chol(mat, what):
    try:
        c, low = linalg.cho_factor(mat, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(mat)
        raise SingularCovarianceError(f"{what} is not positive definite (condition number {cond:.3g})") from None
    return c, low


def _gauss_logpdf(r, mat, what):
    c, low = _chol(mat, what)
    z = linalg.solve_triangular(c, r, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return -0.5 * (r.size * _LOG_2PI + logdet) - 0.5 * float(z @ z)


def loglike_general(method, d: Dataset, model: ModelFunction = None, theta=None, sigma_int=0.0,
                    mu=None, W=None, include_x_norm: bool = True) -> float:
    """Log-likelihood for correlated errors and a (locally linearised) curve.

    Parameters
    ----------
    method : {"unif", "prof", "mnr"}
    d : Dataset
        Either per-point errors or a full covariance.
    model : ModelFunction, optional
        Defaults to a straight line.
    theta : array_like
        Model parameters.
    sigma_int : float
        Intrinsic scatter, added to the y-y diagonal.
    mu : float or array_like, optional
        Latent-prior mean for mnr, a shared scalar or one value per point.
    W : float or array_like, optional
        Latent-prior covariance for mnr. A scalar is a width ``w`` (so the
        covariance is ``w**2`` times the identity); a matrix is used as is.
    include_x_norm : bool
        For prof, normalise with the full error covariance (the exact
        maximum over the latent x). When False only the y-y block is used,
        matching the default of :func:`loglike_prof_diag`.

    Returns
    -------
    float
    """
    model = model or linear()
    if theta is None:
        theta = model.defaults
    n = d.n
    lin = linearise(model, d.x_obs, theta)
    G = lin.dense_G()
    sxx, sxy, syy = assemble_covariance(d, sigma_int)
    resid = lin.f_at_xo - d.y_obs

    if method in ("unif", "prof"):
        D = syy + G @ sxx @ G.T - sxy.T @ G.T - G @ sxy
        D = 0.5 * (D + D.T)
        c, low = _chol(D, "D matrix")
        z = linalg.solve_triangular(c, resid, lower=True)
        quad = -0.5 * float(z @ z)
        if method == "unif":
            return quad - 0.5 * (n * _LOG_2PI + 2.0 * np.sum(np.log(np.diag(c))))
        if include_x_norm:
            # zero-variance x (exactly known) contribute no normalisation
            keep = np.r_[np.diag(sxx) > 0, np.ones(n, dtype=bool)]
            full = np.block([[sxx, sxy], [sxy.T, syy]])[np.ix_(keep, keep)]
        else:
            full = syy
        cf, _ = _chol(full, "error covariance")
        return quad - 0.5 * (full.shape[0] * _LOG_2PI + 2.0 * np.sum(np.log(np.diag(cf))))

    if method == "mnr":
        if mu is None or W is None:
            raise ValueError("mnr needs the latent-prior mean mu and covariance W")
        mu_vec = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
        W = np.asarray(W, dtype=float)
        if W.ndim == 0:
            if W <= 0:
                raise LikelihoodDomainError("w must be strictly positive")
            Wm = float(W) ** 2 * np.eye(n)
        else:
            Wm = W
        M = np.block([[sxx + Wm, sxy + Wm @ G.T], [sxy.T + G @ Wm, syy + G @ Wm @ G.T]])
        M = 0.5 * (M + M.T)
        dx = mu_vec - d.x_obs
        stacked = np.r_[dx, lin.f_at_xo + G @ dx - d.y_obs]
        return _gauss_logpdf(stacked, M, "M matrix")

    if method == "gmm":
        raise NotImplementedError("mixture priors are only available with diagonal errors")
    raise ValueError(f"unknown method {method!r}")


# --- dispatcher ----------------------------------------------------------------

def loglike(spec, d: Dataset, model: ModelFunction, params, include_x_norm: bool = False) -> float:
    """Evaluate the likelihood chosen by ``spec`` at a :class:`~eivreg.core.ParamVector`.

    Diagonal datasets with pointwise models use the fast per-point kernels;
    anything else goes through :func:`loglike_general`.
    """
    model = model or linear()
    sig = params.sigma_int if spec.include_intrinsic_scatter else 0.0
    m = spec.method
    if d.is_diagonal and model.pointwise:
        if m == "unif":
            return loglike_unif_diag(d, params.theta, sig, model)
        if m == "prof":
            return loglike_prof_diag(d, params.theta, sig, model, include_x_norm)
        if m == "mnr":
            return loglike_mnr_diag(d, params.theta, sig, params.mu[0], params.w[0], model)
        return loglike_gmm_diag(d, params.theta, sig, params.weights, params.mu, params.w, model)
    if m == "mnr":
        return loglike_general(m, d, model, params.theta, sig, params.mu[0], params.w[0])
    return loglike_general(m, d, model, params.theta, sig, include_x_norm=include_x_norm)
