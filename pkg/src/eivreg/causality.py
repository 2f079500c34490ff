"""Which variable should be treated as independent?

Both regression directions are fitted. Under an additive-noise picture the
residuals of the correct direction are independent of its regressor, so the
direction whose normalised residuals correlate least with the regressor is
preferred. The outcome is advisory: correlations can be non-monotonic, and
plots of the residuals should be inspected before trusting it.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .core import Dataset, LikelihoodSpec
from .inference import fit_mle
from .models import ModelFunction, linear

MARGIN = 0.05
RECOMMENDATIONS = ("x-independent", "y-independent", "inconclusive")


@dataclass
class DirectionSummary:
    """Fit and residual correlations for one regression direction."""

    params: Optional[dict]
    loglike: Optional[float]
    correlations: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def max_abs(self) -> float:
        vals = [abs(v) for v in self.correlations.values() if np.isfinite(v)]
        return max(vals) if vals else np.nan


@dataclass
class CausalityReport:
    forward: DirectionSummary
    inverse: DirectionSummary
    recommendation: str
    margin: float = MARGIN
    advisory: bool = True
    residuals: dict = field(default_factory=dict, repr=False)

    @property
    def partial(self) -> bool:
        return self.forward.error is not None or self.inverse.error is not None

    def to_dict(self) -> dict:
        out = {
            "forward": asdict(self.forward),
            "inverse": asdict(self.inverse),
            "recommendation": self.recommendation,
            "margin": self.margin,
            "advisory": self.advisory,
            "partial": self.partial,
            "note": "correlations may be non-monotonic; confirm by inspecting the residuals",
        }
        return out


def residual_correlations(resid, regressor) -> dict:
    """Pearson and Spearman coefficients of the residuals, and of their
    magnitudes, against the regressor."""
    resid = np.asarray(resid, dtype=float)
    regressor = np.asarray(regressor, dtype=float)
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for tag, r in (("", resid), ("abs_", np.abs(resid))):
            p = stats.pearsonr(r, regressor)[0] if np.ptp(r) > 0 and np.ptp(regressor) > 0 else np.nan
            s = stats.spearmanr(r, regressor)[0] if np.ptp(r) > 0 and np.ptp(regressor) > 0 else np.nan
            out[f"{tag}pearson"] = float(np.clip(p, -1.0, 1.0)) if np.isfinite(p) else np.nan
            out[f"{tag}spearman"] = float(np.clip(s, -1.0, 1.0)) if np.isfinite(s) else np.nan
    return out


def normalised_residuals(d: Dataset, model: ModelFunction, theta, sigma_int):
    """``(y - f(x)) / sqrt(sigma_y^2 + sigma_int^2 + f'(x)^2 sigma_x^2)`` per point."""
    sx, sy = d.diagonal_errors()
    slope = model.deriv(d.x_obs, theta)
    scale = np.sqrt(sy**2 + sigma_int**2 + slope**2 * sx**2)
    return (d.y_obs - model.eval(d.x_obs, theta)) / np.where(scale > 0, scale, 1.0)


def _direction(d, model, spec):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = fit_mle(spec, d, model)
    except Exception as exc:  # noqa: BLE001 - any failure becomes a partial report
        return DirectionSummary(None, None, {}, f"{type(exc).__name__}: {exc}"), None
    p = fit.params
    r = normalised_residuals(d, model, p.theta, p.sigma_int)
    return DirectionSummary(p.as_dict(), fit.loglike, residual_correlations(r, d.x_obs)), r


def assess_causality(d: Dataset, model_fwd: ModelFunction = None, model_inv: ModelFunction = None,
                     spec: LikelihoodSpec = None, margin: float = MARGIN) -> CausalityReport:
    """Fit y on x and x on y and compare residual correlations.

    The direction with the smaller largest-absolute coefficient is
    recommended when it wins by more than ``margin``; otherwise the result
    is ``"inconclusive"``. A failed fit in either direction gives a partial
    report with an inconclusive recommendation.
    """
    spec = spec or LikelihoodSpec("mnr")
    fwd, r_fwd = _direction(d, model_fwd or linear(), spec)
    inv, r_inv = _direction(d.swapped(), model_inv or linear(), spec)
    rec = "inconclusive"
    if fwd.error is None and inv.error is None:
        a, b = fwd.max_abs, inv.max_abs
        if np.isfinite(a) and np.isfinite(b):
            if b - a > margin:
                rec = "x-independent"
            elif a - b > margin:
                rec = "y-independent"
    return CausalityReport(fwd, inv, rec, margin, True, {"forward": r_fwd, "inverse": r_inv})
