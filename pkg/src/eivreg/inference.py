"""Maximum-likelihood fitting, posterior sampling, model selection and run warnings."""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize, special

from . import likelihood as lk
from ._nuts import NUTS, effective_sample_size, split_rhat
from .core import Dataset, LikelihoodSpec, ParamVector, ValidationError
from .models import ModelFunction, linear

POSITIVE_PARAMS = ("sigma_int", "w", "u_star2", "w_star2")
ESS_WARN = 100.0
EDGE_FRACTION = 0.01
RHAT_WARN = 0.01


# --- configuration and results -------------------------------------------------

@dataclass
class SamplerConfig:
    """Settings for :func:`sample_posterior`.

    ``prior_bounds`` maps parameter names (as in :meth:`ParamVector.as_dict`)
    to ``(lo, hi)`` pairs; either end may be infinite. Priors are uniform
    inside the bounds. Unlisted parameters are unbounded, except widths,
    ``sigma_int`` and the hierarchical variances, which are kept positive.
    """

    n_warmup: int = 700
    n_samples: int = 5000
    n_chains: int = 2
    seed: int = 0
    prior_bounds: dict = field(default_factory=dict)
    target_accept: float = 0.8
    max_tree_depth: int = 10
    metric: str = "dense"

    def __post_init__(self):
        for name in ("n_warmup", "n_samples", "n_chains"):
            v = getattr(self, name)
            if int(v) != v or v < (0 if name == "n_warmup" else 1):
                raise ValidationError(f"{name} must be a positive integer")
        if self.metric not in ("dense", "diag"):
            raise ValidationError("metric must be 'dense' or 'diag'")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")
        self.prior_bounds = {k: _check_bound(k, v) for k, v in dict(self.prior_bounds).items()}


def _check_bound(name, bound):
    lo, hi = (float(v) for v in bound)
    if np.isnan(lo) or np.isnan(hi):
        raise ValidationError(f"prior bound for {name} is NaN")
    if not lo < hi:
        raise ValidationError(f"prior bounds for {name} must satisfy lo < hi, got ({lo}, {hi})")
    return lo, hi


class MLEResult(NamedTuple):
    params: ParamVector
    loglike: float
    converged: bool
    n_evals: int
    warnings: list


@dataclass
class PosteriorResult:
    """Draws and diagnostics from :func:`sample_posterior`.

    ``samples`` stacks the retained draws of all chains (chain-major);
    ``chains`` keeps them separate with shape (n_chains, n_samples, n_params).
    """

    samples: np.ndarray
    param_names: list
    mle: Optional[ParamVector]
    log_like_at_mle: float
    gelman_rubin: dict
    ess: dict
    bic: float
    warnings: list
    chains: np.ndarray = None
    divergences: int = 0
    step_sizes: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return self.samples[:, self.param_names.index(name)]

    def summary(self) -> dict:
        """Median and 16th/84th percentiles per parameter."""
        out = {}
        for i, n in enumerate(self.param_names):
            p16, p50, p84 = np.percentile(self.samples[:, i], [16, 50, 84])
            out[n] = {"median": float(p50), "p16": float(p16), "p84": float(p84),
                      "mean": float(self.samples[:, i].mean()), "std": float(self.samples[:, i].std(ddof=1))}
        return out


# --- unconstrained parametrisation ---------------------------------------------

def _inv(v, lo, hi):
    if np.isinf(lo) and np.isinf(hi):
        return v
    if np.isinf(hi):
        return np.log(max(v - lo, 1e-300))
    if np.isinf(lo):
        return np.log(max(hi - v, 1e-300))
    p = np.clip((v - lo) / (hi - lo), 1e-12, 1 - 1e-12)
    return special.logit(p)


class ParamLayout:
    """Maps an unconstrained vector to a :class:`ParamVector` and back.

    Ordering: model parameters, ``sigma_int``, then latent-prior parameters
    (mnr: ``mu``, ``w``; gmm: ordered means, widths, stick-breaking weights),
    then the hierarchical ``mu_star``, ``u_star2``, ``w_star2``. Mixture means
    are ordered by construction (first mean free, later ones add positive
    increments).
    """

    def __init__(self, spec: LikelihoodSpec, model: ModelFunction, bounds=None, fix_sigma_int=None):
        self.spec, self.model = spec, model
        bounds = dict(bounds or {})
        self.K = spec.n_components if spec.has_latent_prior else 0
        self.gmm = spec.method == "gmm"
        self.fit_sigma = spec.include_intrinsic_scatter and fix_sigma_int is None
        self.fixed_sigma = 0.0 if fix_sigma_int is None else float(fix_sigma_int)
        self.scalars = []  # (name, z index, lo, hi)
        names = list(model.param_names)
        if self.fit_sigma:
            names.append("sigma_int")
        known = set(names) | ({"mu", "w"} if self.K == 1 else set())
        if self.K > 1:
            known |= {f"{p}_{k + 1}" for p in ("mu", "w", "weight") for k in range(self.K)}
        if spec.hyperprior == "hierarchical":
            known |= {"mu_star", "u_star2", "w_star2"}
        for k in bounds:
            if k not in known:
                raise ValidationError(f"prior bound given for unknown parameter {k!r}")
            if self.K > 1 and (k.startswith("mu_") and k != "mu_star" or k.startswith("weight_")):
                raise ValidationError(f"bounds on ordered mixture parameter {k!r} are not supported")

        def bound_for(name, base):
            positive = base in POSITIVE_PARAMS
            lo, hi = bounds.get(name, (0.0 if positive else -np.inf, np.inf))
            if positive and lo < 0:
                raise ValidationError(f"lower bound for {name} must be >= 0")
            return lo, hi

        idx = 0
        for n in names:
            base = "sigma_int" if n == "sigma_int" else n
            self.scalars.append((n, idx, *bound_for(n, base)))
            idx += 1
        self.n_theta = model.n_params
        self.mu_slice = self.w_slice = self.wt_slice = self.hier_slice = None
        if self.K == 1:
            self.scalars.append(("mu", idx, *bound_for("mu", "mu")))
            self.scalars.append(("w", idx + 1, *bound_for("w", "w")))
            self.mu_slice, self.w_slice = slice(idx, idx + 1), slice(idx + 1, idx + 2)
            idx += 2
        elif self.K > 1:
            self.mu_slice = slice(idx, idx + self.K)
            idx += self.K
            self.w_slice = slice(idx, idx + self.K)
            for k in range(self.K):
                self.scalars.append((f"w_{k + 1}", idx + k, *bound_for(f"w_{k + 1}", "w")))
            idx += self.K
            self.wt_slice = slice(idx, idx + self.K - 1)
            idx += self.K - 1
        if spec.hyperprior == "hierarchical":
            self.hier_slice = slice(idx, idx + 3)
            for j, n in enumerate(("mu_star", "u_star2", "w_star2")):
                self.scalars.append((n, idx + j, *bound_for(n, n)))
            idx += 3
        self.dim = idx
        self.bounds = {n: (lo, hi) for n, _, lo, hi in self.scalars}
        # index groups by transform kind, for the vectorised forward map
        lo_, hi_ = np.isinf([s[2] for s in self.scalars]), np.isinf([s[3] for s in self.scalars])
        sc = np.array([s[1] for s in self.scalars], dtype=int)
        arr = np.array([s[2:] for s in self.scalars], dtype=float).reshape(-1, 2)
        low, up, box = ~lo_ & hi_, lo_ & ~hi_, ~lo_ & ~hi_
        self._scalar_idx = sc
        self._lower = (sc[low], arr[low, 0])
        self._upper = (sc[up], arr[up, 1])
        self._box = (sc[box], arr[box, 0], arr[box, 1] - arr[box, 0])

    # names of the flat constrained vector produced by :meth:`constrained`
    @property
    def names(self):
        out = list(self.model.param_names)
        if self.fit_sigma:
            out.append("sigma_int")
        if self.K == 1:
            out += ["mu", "w"]
        elif self.K > 1:
            for k in range(self.K):
                out += [f"mu_{k + 1}", f"w_{k + 1}", f"weight_{k + 1}"]
        if self.hier_slice is not None:
            out += ["mu_star", "u_star2", "w_star2"]
        return out

    def _transform(self, z):
        z = np.asarray(z, dtype=float)
        val = z.copy()
        dval = np.ones(self.dim)
        dlogjac = np.zeros(self.dim)
        logjac = 0.0
        idx, lo = self._lower
        if idx.size:
            e = np.exp(z[idx])
            val[idx], dval[idx] = lo + e, e
            logjac += float(np.sum(z[idx]))
            dlogjac[idx] = 1.0
        idx, hi = self._upper
        if idx.size:
            e = np.exp(z[idx])
            val[idx], dval[idx] = hi - e, -e
            logjac += float(np.sum(z[idx]))
            dlogjac[idx] = 1.0
        idx, lo, width = self._box
        if idx.size:
            zb = z[idx]
            sg = special.expit(zb)
            val[idx], dval[idx] = lo + width * sg, width * sg * (1 - sg)
            logjac += float(np.sum(np.log(width) + special.log_expit(zb) + special.log_expit(-zb)))
            dlogjac[idx] = 1 - 2 * sg
        extra = {}
        if self.K > 1:
            zm = z[self.mu_slice]
            inc = np.exp(zm[1:])
            extra["mu"] = np.concatenate([[zm[0]], zm[0] + np.cumsum(inc)])
            extra["inc"] = inc
            logjac += float(np.sum(zm[1:]))
            dlogjac[self.mu_slice.start + 1:self.mu_slice.stop] += 1.0
            zw = z[self.wt_slice]
            K = self.K
            v = special.expit(zw - np.log(K - 1 - np.arange(K - 1)))
            rem = np.concatenate([[1.0], np.cumprod(1 - v)])
            weights = np.concatenate([v * rem[:-1], [rem[-1]]])
            extra["v"], extra["rem"], extra["weights"] = v, rem, weights
            with np.errstate(divide="ignore"):
                logjac += float(np.sum(np.log(v) + np.log1p(-v) + np.log(rem[:-1])))
            dlogjac[self.wt_slice] += (1 - 2 * v) - v * (K - 2 - np.arange(K - 1))
        return val, dval, logjac, dlogjac, extra

    def to_params(self, z, _cache=None) -> ParamVector:
        val, _, _, _, extra = _cache or self._transform(z)
        theta = val[: self.n_theta]
        sig = val[self.n_theta] if self.fit_sigma else self.fixed_sigma
        mu = w = weights = hier = None
        if self.K == 1:
            mu, w, weights = val[self.mu_slice], val[self.w_slice], np.ones(1)
        elif self.K > 1:
            mu, w, weights = extra["mu"], val[self.w_slice], extra["weights"]
        if self.hier_slice is not None:
            hier = tuple(val[self.hier_slice])
        return _RawParams(theta, sig, mu, w, weights, hier, tuple(self.model.param_names))

    def constrained(self, z) -> np.ndarray:
        return _flat(self.to_params(z), self)

    def from_params(self, p: ParamVector) -> np.ndarray:
        z = np.zeros(self.dim)
        vals = {}
        for i, n in enumerate(self.model.param_names):
            vals[n] = p.theta[i]
        vals["sigma_int"] = p.sigma_int
        if self.K == 1:
            vals["mu"], vals["w"] = p.mu[0], p.w[0]
        elif self.K > 1:
            for k in range(self.K):
                vals[f"w_{k + 1}"] = p.w[k]
        if self.hier_slice is not None:
            vals["mu_star"], vals["u_star2"], vals["w_star2"] = p.hierarchy
        for n, i, lo, hi in self.scalars:
            z[i] = _inv(vals[n], lo, hi)
        if self.K > 1:
            mu = np.asarray(p.mu, dtype=float)
            z[self.mu_slice] = np.concatenate([[mu[0]], np.log(np.maximum(np.diff(mu), 1e-12))])
            wts = np.asarray(p.weights, dtype=float)
            rem = 1.0
            zs = []
            for k in range(self.K - 1):
                v = np.clip(wts[k] / rem, 1e-12, 1 - 1e-12)
                zs.append(special.logit(v) + np.log(self.K - 1 - k))
                rem -= wts[k]
                rem = max(rem, 1e-300)
            z[self.wt_slice] = zs
        return z

    def chain_grad(self, z, cache, g):
        """Gradient w.r.t. z from constrained-space gradients ``g`` (a dict)."""
        val, dval, _, _, extra = cache
        gz = np.zeros(self.dim)
        gc = np.zeros(self.dim)
        gc[: self.n_theta] = g["theta"]
        if self.fit_sigma:
            gc[self.n_theta] = g["sigma_int"]
        if self.K >= 1:
            gc[self.w_slice] = g["w"]
        if self.K == 1:
            gc[self.mu_slice] = g["mu"]
        if self.hier_slice is not None:
            gc[self.hier_slice] = [g["mu_star"], g["u_star2"], g["w_star2"]]
        i = self._scalar_idx
        gz[i] = gc[i] * dval[i]
        if self.K > 1:
            gmu = np.asarray(g["mu"])
            tail = np.cumsum(gmu[::-1])[::-1]
            s = self.mu_slice.start
            gz[s] = tail[0]
            gz[s + 1:self.mu_slice.stop] = extra["inc"] * tail[1:]
            v, rem = extra["v"], extra["rem"]
            gw = np.asarray(g["weights"], dtype=float)
            gr = gw[-1]
            gv = np.zeros(self.K - 1)
            for k in range(self.K - 2, -1, -1):
                gv[k] = gw[k] * rem[k] - gr * rem[k]
                gr = gw[k] * v[k] + gr * (1 - v[k])
            gz[self.wt_slice] = gv * v * (1 - v)
        return gz


class _RawParams(ParamVector):
    """ParamVector without re-validation, used on hot paths."""

    def __init__(self, theta, sigma_int, mu, w, weights, hierarchy, names):
        self.theta, self.sigma_int, self.mu, self.w = theta, float(sigma_int), mu, w
        self.weights, self.hierarchy, self.names = weights, hierarchy, names


def _flat(p, layout):
    out = list(p.theta)
    if layout.fit_sigma:
        out.append(p.sigma_int)
    if layout.K == 1:
        out += [p.mu[0], p.w[0]]
    elif layout.K > 1:
        for k in range(layout.K):
            out += [p.mu[k], p.w[k], p.weights[k]]
    if layout.hier_slice is not None:
        out += list(p.hierarchy)
    return np.asarray(out, dtype=float)


def _finalise(p) -> ParamVector:
    # rebuild a validated ParamVector; clip tiny ordering violations
    mu = None if p.mu is None else np.maximum.accumulate(np.asarray(p.mu, dtype=float))
    weights = None if p.weights is None else np.asarray(p.weights) / np.sum(p.weights)
    return ParamVector(np.array(p.theta, dtype=float), max(p.sigma_int, 0.0), mu,
                       None if p.w is None else np.array(p.w, dtype=float), weights,
                       p.hierarchy, p.names)


# --- objective -----------------------------------------------------------------

class Objective:
    """Log-likelihood (plus hyperprior) and log posterior in unconstrained space.

    Diagonal data with pointwise models use analytic gradients; everything
    else falls back to central differences with step ``1e-6 (1 + |z|)``.
    """

    def __init__(self, spec, d, model, layout):
        self.spec, self.d, self.model, self.layout = spec, d, model, layout
        self.analytic = d.is_diagonal and model.pointwise
        self.hier = spec.hyperprior == "hierarchical"
        self.fast = self.analytic and model.func is lk._lin_f and self._default_layout()

    def _default_layout(self):
        """True when the layout is a free line, log scatter and (for a single
        Gaussian) free mean and log width, so :meth:`_fast_eval` applies."""
        lay = self.layout
        if not lay.fit_sigma or self.hier or lay.K > 1:
            return False
        inf = np.inf
        want = [(-inf, inf), (-inf, inf), (0.0, inf)] + ([(-inf, inf), (0.0, inf)] if lay.K == 1 else [])
        return [(lo, hi) for _, _, lo, hi in lay.scalars] == want

    def _fast_eval(self, z, grad, jac):
        d = self.d
        a, b = float(z[0]), float(z[1])
        sig = float(np.exp(z[2]))
        s = d.y_var + sig * sig
        try:
            if self.layout.K == 1:
                w = float(np.exp(z[4]))
                ll, da, db, ds, dmu, dw = lk._mnr_linear_sums(d.x_obs, d.y_obs, d.x_var, s, a, b, float(z[3]), w)
            else:
                ll, da, db, ds = lk._unif_linear_sums(d.x_obs, d.y_obs, d.x_var, s, a, b,
                                                      self.spec.method == "prof")
        except (lk.LikelihoodDomainError, OverflowError):
            return -np.inf, (np.zeros(self.layout.dim) if grad else None)
        if not np.isfinite(ll):
            return -np.inf, (np.zeros(self.layout.dim) if grad else None)
        lp = ll + (float(z[2]) + (float(z[4]) if self.layout.K == 1 else 0.0) if jac else 0.0)
        if not grad:
            return lp, None
        j = 1.0 if jac else 0.0
        g = [da, db, 2 * sig * sig * ds + j]
        if self.layout.K == 1:
            g += [dmu, dw * w + j]
        return lp, np.array(g)

    def _loglike(self, p, grad):
        m = self.spec.method
        if self.analytic:
            if grad:
                return lk.diag_loglike_and_grad(m, self.d, p.theta, p.sigma_int, p.mu, p.w, p.weights, self.model,
                                                check=False)
            if m == "unif":
                return lk.loglike_unif_diag(self.d, p.theta, p.sigma_int, self.model), None
            if m == "prof":
                return lk.loglike_prof_diag(self.d, p.theta, p.sigma_int, self.model), None
            return lk.loglike_gmm_diag(self.d, p.theta, p.sigma_int, p.weights, p.mu, p.w, self.model), None
        if m == "mnr":
            return lk.loglike_general(m, self.d, self.model, p.theta, p.sigma_int, p.mu[0], p.w[0]), None
        return lk.loglike_general(m, self.d, self.model, p.theta, p.sigma_int, include_x_norm=False), None

    def _eval(self, z, grad, jac):
        if self.fast:
            return self._fast_eval(z, grad, jac)
        cache = self.layout._transform(z)
        p = self.layout.to_params(z, cache)
        try:
            ll, g = self._loglike(p, grad and self.analytic)
            if self.hier:
                mu_s, u2, w2 = p.hierarchy
                if grad and self.analytic:
                    hp, hg = lk.hierarchical_hyperprior_logdensity(p.mu, p.w, mu_s, u2, w2, grad=True)
                    g["mu"] = g["mu"] + hg["mu"]
                    g["w"] = g["w"] + hg["w"] + 1.0 / p.w
                    g.update(mu_star=hg["mu_star"], u_star2=hg["u_star2"], w_star2=hg["w_star2"])
                else:
                    hp = lk.hierarchical_hyperprior_logdensity(p.mu, p.w, mu_s, u2, w2)
                # density is over w_k^2; convert to w_k
                ll += hp + float(np.sum(np.log(2 * p.w)))
        except (lk.LikelihoodDomainError, OverflowError):
            # far-out trajectories: zero density, which the sampler flags as divergent
            return -np.inf, (np.zeros(self.layout.dim) if grad else None)
        if not np.isfinite(ll):
            return -np.inf, (np.zeros(self.layout.dim) if grad else None)
        lp = ll + (cache[2] if jac else 0.0)
        if not grad:
            return lp, None
        if self.analytic:
            gz = self.layout.chain_grad(z, cache, g)
            if jac:
                gz = gz + cache[3]
            return lp, gz
        return lp, self._fd_grad(z, jac)

    def _fd_grad(self, z, jac):
        gz = np.empty(z.size)
        for i in range(z.size):
            h = 1e-6 * (1 + abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            gz[i] = (self._eval(zp, False, jac)[0] - self._eval(zm, False, jac)[0]) / (2 * h)
        return gz

    def loglike(self, z):
        return self._eval(np.asarray(z, dtype=float), False, False)[0]

    def loglike_grad(self, z):
        return self._eval(np.asarray(z, dtype=float), True, False)

    def logpost_grad(self, z):
        return self._eval(np.asarray(z, dtype=float), True, True)


# --- initialisation --------------------------------------------------------------

def default_init(spec: LikelihoodSpec, d: Dataset, model: ModelFunction = None) -> ParamVector:
    """Data-driven starting point.

    Model parameters come from an error-weighted least-squares fit of y on
    x_obs, the scatter from the residual variance in excess of the errors,
    and latent-prior parameters from the moments (or quantiles) of x_obs.
    """
    model = model or linear()
    sx, sy = d.diagonal_errors()
    x, y = d.x_obs, d.y_obs
    theta0 = np.asarray(model.defaults if model.defaults is not None else np.ones(model.n_params), dtype=float)
    scale_y = np.where(sy > 0, sy, max(float(np.std(y)), 1e-3))

    def resid(t):
        return (model.eval(x, t) - y) / scale_y

    try:
        theta = optimize.least_squares(resid, theta0, method="lm" if x.size >= theta0.size else "trf").x
        if not np.all(np.isfinite(theta)):
            theta = theta0
    except Exception:  # noqa: BLE001 - any failure just keeps the defaults
        theta = theta0
    slope = model.deriv(x, theta)
    r = model.eval(x, theta) - y
    err_var = float(np.mean(sy**2 + slope**2 * sx**2))
    excess = float(np.mean(r * r)) - err_var
    floor = 0.1 * np.sqrt(err_var) if err_var > 0 else 0.1 * max(float(np.std(r)), 1e-3)
    sig = np.sqrt(excess) if excess > floor**2 else floor
    if not spec.include_intrinsic_scatter:
        sig = 0.0
    mu = w = weights = hier = None
    var_x = float(np.var(x))
    if spec.has_latent_prior:
        K = spec.n_components
        w2 = max(var_x - float(np.mean(sx**2)), 0.1 * var_x, 1e-12)
        if K == 1:
            mu, w = [float(np.mean(x))], [np.sqrt(w2)]
        else:
            mu = np.quantile(x, (np.arange(K) + 0.5) / K)
            mu = mu + 1e-6 * np.sqrt(w2) * np.arange(K)
            w = np.full(K, np.sqrt(w2) / np.sqrt(K))
        weights = np.full(K, 1.0 / K)
        if spec.hyperprior == "hierarchical":
            hier = (float(np.mean(x)), max(var_x, 1e-12), max(w2 / K, 1e-12))
    return ParamVector(theta, sig, mu, w, weights, hier, tuple(model.param_names))


# --- maximum likelihood -------------------------------------------------------------

def _nelder_mead(fun, z0, max_evals, restarts=4):
    n = z0.size
    best_z, best_f, evals, converged = z0, fun(z0), 1, False
    for _ in range(restarts + 1):
        step = 0.1 * np.maximum(np.abs(best_z), 1.0)
        simplex = np.vstack([best_z] + [best_z + step[i] * np.eye(n)[i] for i in range(n)])
        res = optimize.minimize(fun, best_z, method="Nelder-Mead",
                                options=dict(initial_simplex=simplex, maxfev=max_evals, xatol=1e-10,
                                             fatol=1e-10, adaptive=n > 4))
        evals += res.nfev
        converged = bool(res.success)
        improved = best_f - res.fun
        if res.fun < best_f:
            best_z, best_f = res.x, res.fun
        if improved <= 1e-10 and converged:
            break
    return best_z, best_f, evals, converged


def _maximise(obj: Objective, z0):
    def neg(z):
        v = obj.loglike(z)
        return -v if np.isfinite(v) else np.inf

    n = z0.size
    z, f, evals, converged = _nelder_mead(neg, z0, 500 * max(n, 1))
    # gradient polish: the simplex stalls at ~sqrt(fatol) in the parameters
    if np.isfinite(f):
        def neg_grad(zz):
            v, g = obj.loglike_grad(zz)
            if not np.isfinite(v):
                return np.inf, np.zeros_like(zz)
            return -v, -g
        with np.errstate(all="ignore"):
            res = optimize.minimize(neg_grad, z, jac=True, method="BFGS", options=dict(gtol=1e-10, maxiter=2000))
        evals += res.nfev
        if np.isfinite(res.fun) and res.fun <= f:
            z, f = res.x, res.fun
    return z, -f, evals, converged


def fit_mle(spec: LikelihoodSpec, d: Dataset, model: ModelFunction = None, init: ParamVector = None,
            bounds=None) -> MLEResult:
    """Maximise the chosen likelihood with the Nelder-Mead simplex.

    Positivity and finite bounds are imposed through the unconstrained
    parametrisation of :class:`ParamLayout`. Each simplex run stops when the
    spread of log-likelihoods falls below 1e-10 or after ``500 * n_params``
    evaluations; the simplex is restarted from the best point until it stops
    improving, and a final gradient polish sharpens the optimum. When the
    scatter is free, the fit is repeated with ``sigma_int = 0`` and the
    better of the two is kept, since the maximum often lies on that boundary.
    For the hierarchical mixture the hyperprior is included (a MAP estimate).

    Returns
    -------
    MLEResult
        ``(params, loglike, converged, n_evals, warnings)``; ``loglike``
        excludes the hyperprior.
    """
    model = model or linear()
    init = init or default_init(spec, d, model)
    msgs = []
    layout = ParamLayout(spec, model, bounds)
    obj = Objective(spec, d, model, layout)
    z0 = layout.from_params(init)
    if not np.isfinite(obj.loglike(z0)):
        raise ValueError("log-likelihood is not finite at the initial point")
    z, ll, evals, converged = _maximise(obj, z0)
    best = _finalise(layout.to_params(z))

    if layout.fit_sigma and layout.bounds["sigma_int"][0] == 0.0:
        fixed = ParamLayout(spec, model, {k: v for k, v in (bounds or {}).items() if k != "sigma_int"},
                            fix_sigma_int=0.0)
        fobj = Objective(spec, d, model, fixed)
        zf0 = fixed.from_params(best)
        if np.isfinite(fobj.loglike(zf0)):
            zf, llf, ev2, conv2 = _maximise(fobj, zf0)
            evals += ev2
            p = fixed.to_params(zf)
            cand = _finalise(_RawParams(p.theta, 0.0, p.mu, p.w, p.weights, p.hierarchy, p.names))
            # the boundary is a constrained maximum when the likelihood falls
            # off into sigma_int^2 > 0; then small free-fit gains are noise
            if llf > ll or (llf >= ll - 1e-6 * max(1.0, abs(ll))
                            and _boundary_slope(spec, d, model, cand) <= 0):
                best, ll, converged = cand, llf, conv2
    if not converged:
        msgs.append("Nelder-Mead reached the evaluation limit before converging")
        _warnings.warn(msgs[-1], RuntimeWarning, stacklevel=2)
    loglike_only = lk.loglike(spec, d, model, best)
    return MLEResult(best, float(loglike_only), converged, evals, msgs)


def _boundary_slope(spec, d, model, p):
    """One-sided derivative of the log-likelihood in sigma_int**2 at zero."""
    _, sy = d.diagonal_errors()
    ref = float(np.median(sy**2)) if np.any(sy > 0) else 1.0
    h = 1e-6 * max(ref, 1e-12)
    up = ParamVector(p.theta, np.sqrt(h), p.mu, p.w, p.weights, p.hierarchy, p.names)
    try:
        return (lk.loglike(spec, d, model, up) - lk.loglike(spec, d, model, p)) / h
    except lk.LikelihoodDomainError:
        return -np.inf


# --- posterior sampling ---------------------------------------------------------------

def sample_posterior(spec: LikelihoodSpec, d: Dataset, model: ModelFunction = None,
                     cfg: SamplerConfig = None, init: ParamVector = None, compute_mle: bool = True
                     ) -> PosteriorResult:
    """Draw from the posterior with a no-U-turn Hamiltonian sampler.

    Priors are uniform within ``cfg.prior_bounds`` (improper where the bounds
    are infinite), with the hierarchical hyperprior added for that mixture
    variant. Chains use independent generators spawned from ``cfg.seed``, so
    a fixed seed and configuration reproduce the chains exactly.
    """
    model = model or linear()
    cfg = cfg or SamplerConfig()
    layout = ParamLayout(spec, model, cfg.prior_bounds)
    obj = Objective(spec, d, model, layout)
    init = init or default_init(spec, d, model)
    z_init = layout.from_params(init)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    chains, divergences, step_sizes = [], 0, []
    for ss in streams:
        rng = np.random.default_rng(ss)
        z0 = None
        for _ in range(100):
            cand = z_init + rng.uniform(-0.2, 0.2, size=layout.dim)
            if np.isfinite(obj.logpost_grad(cand)[0]):
                z0 = cand
                break
        if z0 is None:
            raise ValueError("could not find a finite starting point for the sampler")
        sampler = NUTS(obj.logpost_grad, layout.dim, rng, cfg.target_accept, cfg.max_tree_depth,
                       cfg.metric)
        out = sampler.run(z0, cfg.n_warmup, cfg.n_samples)
        chains.append(np.array([layout.constrained(zz) for zz in out.draws]))
        divergences += int(out.divergent.sum())
        step_sizes.append(out.step_size)
    chains = np.asarray(chains)
    names = layout.names
    rhat = {n: split_rhat(chains[:, :, i]) for i, n in enumerate(names)}
    ess = {n: effective_sample_size(chains[:, :, i]) for i, n in enumerate(names)}
    mle, ll_hat, b = None, np.nan, np.nan
    if compute_mle:
        try:
            fit = fit_mle(spec, d, model, init, cfg.prior_bounds)
            mle, ll_hat = fit.params, fit.loglike
            b = bic(ll_hat, n_free_params(spec, model), d.n)
        except (ValueError, lk.LikelihoodDomainError):
            pass
    result = PosteriorResult(chains.reshape(-1, chains.shape[-1]), names, mle, ll_hat, rhat, ess, b, [],
                             chains, divergences, step_sizes, layout.bounds)
    result.warnings = emit_warnings(result, d, model, mle.theta if mle is not None else None)
    return result


# --- summaries, BIC and warnings ---------------------------------------------------------

def sigma_int_summary(samples):
    """Fit a normal truncated at zero to non-negative samples.

    Returns ``(mode, scale)``: the location of the untruncated normal clamped
    at zero, and its standard deviation. Degenerate (constant) samples give
    ``(value, 0)``.
    """
    # sorted so the result does not depend on sample order
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("no samples")
    if np.any(x < 0):
        raise ValueError("samples must be non-negative")
    if np.all(x == x[0]):
        return float(x[0]), 0.0
    sd0 = float(np.std(x))

    def nll(p):
        m, log_s = p
        s = np.exp(log_s)
        z = (x - m) / s
        return float(0.5 * np.sum(z * z) + x.size * (log_s + special.log_ndtr(m / s)))

    best = None
    for m0 in (float(np.mean(x)), 0.0, -float(np.mean(x))):
        res = optimize.minimize(nll, [m0, np.log(sd0)], method="Nelder-Mead",
                                options=dict(xatol=1e-10, fatol=1e-12, maxfev=4000))
        if best is None or res.fun < best.fun:
            best = res
    m, s = best.x[0], float(np.exp(best.x[1]))
    return float(max(m, 0.0)), s


def bic(log_like_hat, k, N):
    """Bayesian information criterion ``k ln N - 2 ln L``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return float(k * np.log(N) - 2.0 * log_like_hat)


def n_free_params(spec: LikelihoodSpec, model: ModelFunction) -> int:
    """Free-parameter count used for BIC.

    Model parameters, plus one for the scatter, plus two per Gaussian
    (mean, width) and ``N_g - 1`` weights, plus three hierarchical
    hyperparameters when active.
    """
    k = model.n_params + (1 if spec.include_intrinsic_scatter else 0)
    if spec.has_latent_prior:
        K = spec.n_components
        k += 3 * K - 1
        if spec.hyperprior == "hierarchical":
            k += 3
    return k


def select_ngauss(d: Dataset, model: ModelFunction = None, max_ng: int = 10, hyperprior="uniform-ordered",
                  include_intrinsic_scatter=True):
    """Fit mixtures with 1..max_ng components and pick the lowest BIC.

    Returns ``(best_ng, table)`` where ``table`` maps each N_g to a dict with
    ``bic``, ``loglike`` and ``params``, or ``error`` if that fit failed.
    """
    if max_ng < 1:
        raise ValueError("max_ng must be at least 1")
    model = model or linear()
    table = {}
    for ng in range(1, max_ng + 1):
        spec = LikelihoodSpec("gmm", ng, hyperprior, include_intrinsic_scatter)
        try:
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore", RuntimeWarning)
                fit = fit_mle(spec, d, model)
            table[ng] = {"bic": bic(fit.loglike, n_free_params(spec, model), d.n),
                         "loglike": fit.loglike, "params": fit.params}
        except (ValueError, lk.LikelihoodDomainError, np.linalg.LinAlgError) as exc:
            table[ng] = {"error": str(exc)}
    ok = {k: v["bic"] for k, v in table.items() if "bic" in v}
    if not ok:
        raise ValueError("every mixture fit failed")
    return min(ok, key=ok.get), table


def taylor_warnings(d: Dataset, model: ModelFunction, theta):
    """Indices of points where the tangent-line approximation is suspect."""
    sx, _ = d.diagonal_errors()
    f1 = np.abs(model.deriv(d.x_obs, theta))
    f2 = np.abs(model.second_deriv(d.x_obs, theta))
    return np.nonzero(f2 * sx > f1)[0]


def emit_warnings(result: PosteriorResult, d: Dataset, model: ModelFunction = None, theta_hat=None) -> list:
    """Run-quality warnings for a finished posterior run.

    Flags parameters with effective sample size below 100, a posterior peak
    within 1% of a finite prior bound (relative to the box width, or to the
    posterior spread for one-sided user bounds), points where
    ``|f''| sigma_x > |f'|``, divergent transitions, and split R-hat above
    1.01.
    """
    model = model or linear()
    out = []
    for n, v in result.ess.items():
        if not v >= ESS_WARN:
            out.append(f"low effective sample size for {n}: {v:.1f} < {ESS_WARN:.0f}")
    for n, (lo, hi) in (result.bounds or {}).items():
        if n not in result.param_names:
            continue
        col = result.column(n)
        peak = _peak(col, result, n)
        if np.isfinite(lo) and np.isfinite(hi):
            tol = EDGE_FRACTION * (hi - lo)
        else:
            # one-sided bounds only count when the user set them away from the default
            if (lo == 0.0 and np.isinf(hi)) or (np.isinf(lo) and np.isinf(hi)):
                continue
            tol = EDGE_FRACTION * max(float(np.std(col)), abs(lo if np.isfinite(lo) else hi), 1e-12)
        for edge in (lo, hi):
            if np.isfinite(edge) and abs(peak - edge) <= tol:
                out.append(f"posterior peak of {n} ({peak:.4g}) lies within 1% of the prior bound {edge:g}")
    theta = theta_hat if theta_hat is not None else np.array(
        [np.median(result.column(n)) for n in model.param_names])
    bad = taylor_warnings(d, model, theta)
    if bad.size:
        out.append(f"second-order term exceeds the first derivative at {bad.size} point(s) "
                   f"(first index {int(bad[0])}); the linearised likelihood may be inaccurate")
    if result.divergences:
        out.append(f"{result.divergences} divergent transition(s) after warmup")
    for n, r in result.gelman_rubin.items():
        if np.isfinite(r) and r - 1 > RHAT_WARN:
            out.append(f"R-hat for {n} is {r:.4f} (> 1.01)")
    return out


def _peak(col, result, name):
    if result.mle is not None:
        vals = result.mle.as_dict()
        if name in vals:
            return vals[name]
    hist, edges = np.histogram(col, bins=50)
    i = int(np.argmax(hist))
    return 0.5 * (edges[i] + edges[i + 1])
