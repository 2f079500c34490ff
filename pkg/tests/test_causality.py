import numpy as np
import pytest

import eivreg.causality as causality
from eivreg.causality import assess_causality, residual_correlations
from eivreg.core import validate_dataset


def _x_independent(seed=0, n=2000):
    rng = np.random.default_rng(seed)
    xt = rng.exponential(3.0, n)
    y = 2 * xt + 1 + rng.normal(0, 2, n)
    x = xt + rng.normal(0, 0.05, n)
    y = y + rng.normal(0, 0.3, n)
    return validate_dataset(x, y, 0.05, 0.3)


def test_x_independent_recovered():
    rep = assess_causality(_x_independent())
    assert rep.recommendation == "x-independent"
    assert rep.advisory and not rep.partial


def test_gaussian_pair_inconclusive():
    rng = np.random.default_rng(1)
    xy = rng.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]], 5000)
    rep = assess_causality(validate_dataset(xy[:, 0], xy[:, 1], 0.01, 0.01))
    assert rep.recommendation == "inconclusive"


def test_correlation_extremes():
    x = np.linspace(-1, 1, 101)
    c = residual_correlations(-x, x)
    assert c["pearson"] == pytest.approx(-1.0) and c["spearman"] == pytest.approx(-1.0)
    assert np.isnan(residual_correlations(np.zeros(5), np.arange(5.0))["pearson"])


def test_swap_symmetry():
    d = _x_independent(2, 1000)
    a, b = assess_causality(d), assess_causality(d.swapped())
    assert b.recommendation == "y-independent"
    for k, v in a.forward.correlations.items():
        assert b.inverse.correlations[k] == pytest.approx(v, abs=1e-5)


def test_affine_invariance():
    d = _x_independent(3, 1000)
    d2 = validate_dataset(3 * d.x_obs + 7, 0.5 * d.y_obs - 2, 3 * d.x_err, 0.5 * d.y_err)
    a, b = assess_causality(d), assess_causality(d2)
    assert a.recommendation == b.recommendation
    for k, v in a.forward.correlations.items():
        assert b.forward.correlations[k] == pytest.approx(v, abs=1e-4)


def test_partial_report_on_failure(monkeypatch):
    real = causality.fit_mle
    calls = []

    def flaky(spec, d, model):
        calls.append(1)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return real(spec, d, model)

    monkeypatch.setattr(causality, "fit_mle", flaky)
    rep = assess_causality(_x_independent(4, 300))
    assert rep.partial and rep.recommendation == "inconclusive"
    assert "boom" in rep.inverse.error and rep.forward.error is None
    assert rep.to_dict()["partial"] is True
