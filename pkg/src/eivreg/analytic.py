"""Closed-form maximum-likelihood estimators for a straight line with equal
errors on every point, and the large-sample bias of the uniform-prior fit.

All moments use 1/N normalisation. ``s2`` is the total y variance
``sigma_y**2 + sigma_int**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .cubic import real_roots_with_branch


class SampleMoments(NamedTuple):
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    cov_xy: float


class HomoscedasticErrors(NamedTuple):
    sigma_x: float
    sigma_y: float


def moments(d) -> SampleMoments:
    """Population moments of ``d.x_obs`` and ``d.y_obs``.

    Accepts a :class:`~eivreg.core.Dataset` or an ``(x, y)`` pair.
    """
    if isinstance(d, tuple):
        x, y = (np.asarray(v, dtype=float) for v in d)
    else:
        x, y = d.x_obs, d.y_obs
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    return SampleMoments(mx, my, float(np.mean(dx * dx)), float(np.mean(dy * dy)), float(np.mean(dx * dy)))


def unif_mle(m: SampleMoments, e: HomoscedasticErrors):
    """(A, B, s2) maximising the uniform-prior marginal likelihood.

    ``s2`` is returned unclamped and can be negative.
    """
    if m.var_x <= 0:
        raise ValueError("degenerate abscissa: var(x) = 0")
    A = m.cov_xy / m.var_x
    # <x^2><y> - <xy><x> over var(x), written in centred moments
    B = m.mean_y - A * m.mean_x
    s2 = m.var_y - m.cov_xy**2 / m.var_x**2 * (m.var_x + e.sigma_x**2)
    return A, B, s2


def unif_bias(A_true, mean_xt, var_xt, sigma_x):
    """Asymptotic (N -> infinity) bias of :func:`unif_mle` in (A, B, s2)."""
    sx2 = sigma_x**2
    denom = var_xt + sx2
    if denom <= 0:
        raise ValueError("var_xt + sigma_x**2 must be positive")
    dA = -A_true * sx2 / denom
    dB = A_true * sx2 * mean_xt / denom
    ds2 = A_true**2 * var_xt * sx2**2 / denom**2
    return dA, dB, ds2


def mnr_mle(m: SampleMoments, e: HomoscedasticErrors):
    """(A, B, s2, mu, w2) maximising the single-Gaussian-prior marginal likelihood."""
    w2 = m.var_x - e.sigma_x**2
    if w2 <= 0:
        raise ValueError("observed x-variance not exceeding x-error variance")
    A = m.cov_xy / w2
    B = m.mean_y - A * m.mean_x
    s2 = m.var_y - m.cov_xy**2 / w2
    return A, B, s2, m.mean_x, w2


# --- profile likelihood -----------------------------------------------------

def prof_loglike2(m: SampleMoments, e: HomoscedasticErrors, A, s2, n=1):
    """Profile log-likelihood with B and the latent x already maximised out.

    Additive constants are dropped; ``n`` scales the result to N points.
    """
    resid = m.var_y + A * A * m.var_x - 2 * A * m.cov_xy
    return n * (-0.5 * np.log(s2) - 0.5 * resid / (s2 + A * A * e.sigma_x**2))


def prof_cubic_coeffs(m: SampleMoments, e: HomoscedasticErrors):
    """Coefficients (a, b, c, d) of the cubic satisfied by the stationary s2."""
    vx, vy, cv = m.var_x, m.var_y, m.cov_xy
    sx2 = e.sigma_x**2
    a = vx**2
    b = -(vx**2) * vy + 4 * cv**2 * sx2 - 2 * vx * vy * sx2
    c = -(cv**4) + cv**2 * vx * vy - 4 * cv**2 * vy * sx2 + 2 * vx * vy**2 * sx2 + vy**2 * sx2**2
    d = -(vy**3) * sx2**2
    return a, b, c, d


def prof_slope_at(m: SampleMoments, e: HomoscedasticErrors, s2):
    """Stationary slope for a given interior s2 (undefined when the denominator vanishes)."""
    sx2 = e.sigma_x**2
    num = m.cov_xy * (m.var_y - 2 * s2)
    den = m.cov_xy**2 - s2 * m.var_x + sx2 * m.var_y
    if den == 0:
        return None
    return num / den


def prof_slopes_at_fixed_s(m: SampleMoments, e: HomoscedasticErrors, s2):
    """Slopes stationary in A when s2 is held fixed.

    The cubic terms of the A-derivative cancel, leaving
    ``cov sx2 A^2 + (var_x s2 - sx2 var_y) A - cov s2 = 0``.
    """
    sx2 = e.sigma_x**2
    qa = m.cov_xy * sx2
    qb = m.var_x * s2 - sx2 * m.var_y
    qc = -m.cov_xy * s2
    if qa == 0:
        return [0.0] if qb == 0 else [-qc / qb]
    disc = qb * qb - 4 * qa * qc
    sq = np.sqrt(max(disc, 0.0))
    q = -0.5 * (qb + np.copysign(sq, qb))
    out = [q / qa]
    if q != 0:
        out.append(qc / q)
    return out


def prof_stationarity_residuals(m: SampleMoments, e: HomoscedasticErrors, A, s2):
    """Relative residuals of the s- and A-stationarity conditions."""
    sx2 = e.sigma_x**2
    R = m.var_y + A * A * m.var_x - 2 * A * m.cov_xy
    lhs_s, rhs_s = (s2 + A * A * sx2) ** 2, s2 * R
    lhs_a = (A * m.var_x - m.cov_xy) * (s2 + A * A * sx2)
    rhs_a = A * sx2 * R
    scale_s = max(abs(lhs_s), abs(rhs_s), 1e-300)
    scale_a = max(abs(lhs_a), abs(rhs_a), abs(m.cov_xy) * s2, 1e-300)
    return abs(lhs_s - rhs_s) / scale_s, abs(lhs_a - rhs_a) / scale_a


@dataclass
class ProfileBranchReport:
    """How :func:`prof_mle` arrived at its answer."""

    cubic_branch: str
    boundary: bool
    candidates: list = field(default_factory=list)  # (A, s2, loglike, kind)
    residuals: tuple = (0.0, 0.0)
    degenerate: bool = False


def prof_mle(m: SampleMoments, e: HomoscedasticErrors):
    """(A, B, s2, report) maximising the profile likelihood subject to s2 >= sigma_y**2.

    Interior candidates come from the real roots of the stationarity cubic;
    the boundary ``s = sigma_y`` is always evaluated as well and the best of
    all candidates is returned.
    """
    if m.var_x <= 0:
        raise ValueError("degenerate abscissa: var(x) = 0")
    sy2 = e.sigma_y**2
    candidates = []
    degenerate = m.cov_xy == 0.0

    branch = "none"
    if degenerate:
        # slope identically zero; maximise over s alone
        s2 = max(m.var_y, sy2)
        candidates.append((0.0, s2, prof_loglike2(m, e, 0.0, s2), "A=0"))
    else:
        roots, branch = real_roots_with_branch(prof_cubic_coeffs(m, e))
        for u in roots:
            if not np.isfinite(u) or u <= 0 or u < sy2:
                continue
            A = prof_slope_at(m, e, u)
            if A is None or not np.isfinite(A):
                continue
            candidates.append((A, u, prof_loglike2(m, e, A, u), "root"))

    if sy2 > 0:
        for A in prof_slopes_at_fixed_s(m, e, sy2):
            candidates.append((A, sy2, prof_loglike2(m, e, A, sy2), "boundary"))
    elif not candidates:
        raise ValueError("no admissible profile-likelihood solution with sigma_y = 0")

    best = max(candidates, key=lambda c: c[2])
    A, s2, _, kind = best
    if degenerate and kind == "A=0" and sy2 > 0 and s2 == sy2:
        kind = "boundary"
    B = m.mean_y - A * m.mean_x
    report = ProfileBranchReport(
        cubic_branch=branch,
        boundary=kind == "boundary",
        candidates=candidates,
        residuals=prof_stationarity_residuals(m, e, A, s2) if kind == "root" else (0.0, 0.0),
        degenerate=degenerate,
    )
    return A, B, s2, report
