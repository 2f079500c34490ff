"""Domain types shared across the package: datasets, method selection and
parameter containers, plus covariance assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import linalg

PSD_PIVOT_TOL = 1e-10
SYMMETRY_TOL = 1e-12

METHODS = ("unif", "prof", "mnr", "gmm")
HYPERPRIORS = ("uniform-ordered", "hierarchical")


class ValidationError(ValueError):
    """Raised when user-supplied data or configuration is malformed."""


def _as_vector(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed points with Gaussian uncertainties.

    Either per-point errors (``x_err``/``y_err``) or a full ``2N x 2N``
    covariance ordered as ``(x_1..x_N, y_1..y_N)`` is populated, never both.
    Build instances through :func:`validate_dataset`.
    """

    x_obs: np.ndarray
    y_obs: np.ndarray
    x_err: Optional[np.ndarray] = None
    y_err: Optional[np.ndarray] = None
    full_cov: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.x_obs.size

    @cached_property
    def x_var(self) -> Optional[np.ndarray]:
        """Squared x errors (diagonal datasets only)."""
        return None if self.x_err is None else self.x_err**2

    @cached_property
    def y_var(self) -> Optional[np.ndarray]:
        """Squared y errors (diagonal datasets only)."""
        return None if self.y_err is None else self.y_err**2

    @property
    def is_diagonal(self) -> bool:
        return self.full_cov is None

    def swapped(self) -> "Dataset":
        """Exchange the roles of x and y (errors and covariance blocks included)."""
        if self.full_cov is None:
            return Dataset(self.y_obs, self.x_obs, self.y_err, self.x_err)
        n = self.n
        perm = np.r_[np.arange(n, 2 * n), np.arange(n)]
        return Dataset(self.y_obs, self.x_obs, full_cov=self.full_cov[np.ix_(perm, perm)])

    def diagonal_errors(self):
        """Per-point (sigma_x, sigma_y); for a full covariance the diagonal square roots."""
        if self.full_cov is None:
            return self.x_err, self.y_err
        d = np.sqrt(np.clip(np.diag(self.full_cov), 0.0, None))
        return d[: self.n], d[self.n :]


def _check_psd(cov):
    scale = max(float(np.max(np.abs(np.diag(cov)))), np.finfo(float).tiny)
    _, d, _ = linalg.ldl(cov)
    # d may contain 2x2 blocks; their eigenvalues are the pivots that matter
    pivots = linalg.eigvalsh(d)
    if pivots.min() < -PSD_PIVOT_TOL * scale:
        eig = linalg.eigvalsh(cov).min()
        raise ValidationError(
            f"covariance not positive semi-definite (smallest eigenvalue {eig:.6g})"
        )


def validate_dataset(x_obs, y_obs, x_err=None, y_err=None, full_cov=None) -> Dataset:
    """Check shapes, signs and covariance structure and return a frozen Dataset.

    A missing ``x_err`` (or ``y_err``) alongside the other one is read as zero
    uncertainty on that axis.
    """
    x = _as_vector("x_obs", x_obs)
    y = _as_vector("y_obs", y_obs)
    if x.size != y.size:
        raise ValidationError(f"dimension mismatch: x_obs has {x.size} points, y_obs has {y.size}")
    n = x.size
    if n < 2:
        raise ValidationError("need at least two data points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("observations must be finite")

    has_diag = x_err is not None or y_err is not None
    if has_diag and full_cov is not None:
        raise ValidationError("supply either per-point errors or a full covariance, not both")
    if not has_diag and full_cov is None:
        raise ValidationError("no uncertainties supplied")

    if full_cov is not None:
        cov = np.array(full_cov, dtype=float)
        if cov.shape != (2 * n, 2 * n):
            raise ValidationError(
                f"dimension mismatch: full_cov must be {2 * n}x{2 * n}, got {cov.shape}"
            )
        if not np.all(np.isfinite(cov)):
            raise ValidationError("covariance contains non-finite entries")
        scale = max(float(np.max(np.abs(cov))), 1.0)
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise ValidationError("covariance not symmetric")
        cov = 0.5 * (cov + cov.T)
        _check_psd(cov)
        cov.setflags(write=False)
        x.setflags(write=False)
        y.setflags(write=False)
        return Dataset(x, y, full_cov=cov)

    errs = []
    for name, e in (("x_err", x_err), ("y_err", y_err)):
        e = np.zeros(n) if e is None else _as_vector(name, e)
        if e.size == 1 and n > 1:
            e = np.full(n, e[0])
        if e.size != n:
            raise ValidationError(f"dimension mismatch: {name} has {e.size} entries, expected {n}")
        if not np.all(np.isfinite(e)):
            raise ValidationError(f"{name} must be finite")
        if np.any(e < 0):
            raise ValidationError(f"negative uncertainty in {name}")
        e.setflags(write=False)
        errs.append(e)
    x.setflags(write=False)
    y.setflags(write=False)
    return Dataset(x, y, errs[0], errs[1])


def assemble_covariance(d: Dataset, sigma_int: float = 0.0):
    """Return ``(Sxx, Sxy, Syy)`` with ``sigma_int**2`` added to the Syy diagonal."""
    n = d.n
    if d.full_cov is None:
        sxx = np.diag(d.x_err**2)
        syy = np.diag(d.y_err**2 + sigma_int**2)
        sxy = np.zeros((n, n))
        return sxx, sxy, syy
    cov = d.full_cov
    sxx = cov[:n, :n].copy()
    sxy = cov[:n, n:].copy()
    syy = cov[n:, n:].copy()
    syy[np.diag_indices(n)] += sigma_int**2
    return sxx, sxy, syy


@dataclass(frozen=True)
class LikelihoodSpec:
    """Which latent-x treatment to use.

    ``method`` is one of ``unif``, ``prof``, ``mnr`` or ``gmm``. ``n_gauss`` and
    ``hyperprior`` only matter for ``gmm``.
    """

    method: str = "mnr"
    n_gauss: int = 1
    hyperprior: str = "uniform-ordered"
    include_intrinsic_scatter: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.hyperprior not in HYPERPRIORS:
            raise ValidationError(f"unknown hyperprior {self.hyperprior!r}")
        if int(self.n_gauss) != self.n_gauss or self.n_gauss < 1:
            raise ValidationError("n_gauss must be a positive integer")
        if self.method == "mnr" and self.n_gauss != 1:
            raise ValidationError("mnr uses exactly one Gaussian; use method='gmm'")
        if self.hyperprior == "hierarchical" and self.method != "gmm":
            raise ValidationError("hierarchical hyperprior is only valid for gmm")

    @property
    def has_latent_prior(self) -> bool:
        return self.method in ("mnr", "gmm")

    @property
    def n_components(self) -> int:
        return self.n_gauss if self.method == "gmm" else 1


@dataclass
class ParamVector:
    """A point in parameter space.

    ``mu``, ``w`` and ``weights`` hold one entry per Gaussian component
    (a single entry for mnr). ``hierarchy`` is ``(mu_star, u_star2, w_star2)``.
    """

    theta: np.ndarray
    sigma_int: float = 0.0
    mu: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    hierarchy: Optional[tuple] = None
    names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.sigma_int = float(self.sigma_int)
        if self.sigma_int < 0:
            raise ValidationError("sigma_int must be non-negative")
        if self.mu is not None:
            self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
            self.w = np.atleast_1d(np.asarray(self.w, dtype=float))
            if self.weights is None:
                self.weights = np.full(self.mu.size, 1.0 / self.mu.size)
            self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if not (self.mu.size == self.w.size == self.weights.size):
                raise ValidationError("mu, w and weights must have equal length")
            if np.any(self.w <= 0):
                raise ValidationError("component widths must be strictly positive")
            if np.any(self.weights <= 0) or abs(self.weights.sum() - 1) > 1e-8:
                raise ValidationError("component weights must be positive and sum to 1")
            if np.any(np.diff(self.mu) < 0):
                raise ValidationError("component means must be non-decreasing")
        if self.hierarchy is not None:
            mu_star, u2, w2 = (float(v) for v in self.hierarchy)
            if u2 <= 0 or w2 <= 0:
                raise ValidationError("hierarchical variances must be strictly positive")
            self.hierarchy = (mu_star, u2, w2)

    def as_dict(self) -> dict:
        """Flat name -> value mapping, using ``names`` for theta when available."""
        names = self.names or tuple(f"theta_{i}" for i in range(self.theta.size))
        out = {n: float(v) for n, v in zip(names, self.theta)}
        out["sigma_int"] = self.sigma_int
        if self.mu is not None:
            if self.mu.size == 1:
                out["mu"] = float(self.mu[0])
                out["w"] = float(self.w[0])
            else:
                for k in range(self.mu.size):
                    out[f"mu_{k + 1}"] = float(self.mu[k])
                    out[f"w_{k + 1}"] = float(self.w[k])
                    out[f"weight_{k + 1}"] = float(self.weights[k])
        if self.hierarchy is not None:
            out["mu_star"], out["u_star2"], out["w_star2"] = self.hierarchy
        return out
