import dataclasses

import numpy as np
import pytest

from eivreg.analytic import (HomoscedasticErrors, moments, mnr_mle, prof_loglike2, prof_mle,
                             prof_stationarity_residuals, unif_bias, unif_mle)
from eivreg.core import LikelihoodSpec
from eivreg.inference import fit_mle
from eivreg.mock import FIDUCIAL, MockConfig, gen_mock


def test_moments_two_points():
    m = moments(([0.0, 2.0], [1.0, 5.0]))
    assert (m.mean_x, m.var_x, m.cov_xy) == (1.0, 1.0, 2.0)


def test_moments_degenerate_x():
    m = moments(([1.0, 1.0, 1.0], [3.0, -2.0, 0.5]))
    assert m.var_x == 0 and m.cov_xy == 0


def test_moments_large_sample():
    x = np.random.default_rng(1).standard_normal(10**5)
    assert abs(moments((x, x)).var_x - 1) < 0.02


def _line(sx):
    x = np.linspace(-3, 5, 50)
    return moments((x, 2 * x + 1)), HomoscedasticErrors(sx, 0.0)


def test_unif_mle_exact_line():
    A, B, s2 = unif_mle(*_line(0.0))
    assert A == pytest.approx(2) and B == pytest.approx(1) and s2 == pytest.approx(0, abs=1e-10)


def test_unif_mle_negative_variance():
    m, e = _line(1.0)
    A, _, s2 = unif_mle(m, e)
    assert s2 == pytest.approx(-A**2 * 1.0)


def test_unif_mle_degenerate():
    with pytest.raises(ValueError, match="degenerate abscissa"):
        unif_mle(moments(([1.0, 1.0], [0.0, 1.0])), HomoscedasticErrors(0, 0))


def test_unif_bias_zero_cases():
    assert unif_bias(5.0, 8.0, 64.0, 0.0) == (0.0, 0.0, 0.0)
    assert unif_bias(0.0, 8.0, 64.0, 1.0) == (0.0, 0.0, 0.0)


def test_unif_bias_values():
    dA, dB, ds2 = unif_bias(5.0, 8.0, 64.0, 1.0)
    assert dA == pytest.approx(-5 / 65)
    assert dB == pytest.approx(40 / 65)
    assert ds2 == pytest.approx(25 * 64 / 65**2)


def test_unif_bias_matches_large_mock():
    cfg = MockConfig(n_points=10**5, sigma_x_spread=0.0, sigma_y_spread=0.0, seed=3)
    d, truth = gen_mock(cfg)
    A = unif_mle(moments(d), HomoscedasticErrors(1.0, 2.0))[0]
    dA = unif_bias(5.0, truth.x_true.mean(), truth.x_true.var(), 1.0)[0]
    assert (A - 5.0) / dA == pytest.approx(1.0, abs=0.25)


def test_mnr_reduces_to_unif_at_zero_x_error():
    rng = np.random.default_rng(2)
    x = rng.normal(size=200)
    m = moments((x, 3 * x + rng.normal(size=200)))
    e = HomoscedasticErrors(0.0, 0.5)
    A, B, s2, mu, w2 = mnr_mle(m, e)
    assert (A, B, s2) == pytest.approx(unif_mle(m, e))
    assert mu == m.mean_x and w2 == m.var_x


def test_mnr_matches_numeric_fit():
    # latent positions spread with variance 4, observed with unit x-error
    rng = np.random.default_rng(4)
    xt = rng.normal(0, 2, 5000)
    x = xt + rng.normal(0, 1, 5000)
    y = 2 * xt + 1 + rng.normal(0, np.sqrt(0.5**2 + 1.0), 5000)
    from eivreg.core import validate_dataset
    d = validate_dataset(x, y, np.ones_like(x), np.full_like(x, 0.5))
    A, B, s2, mu, w2 = mnr_mle(moments(d), HomoscedasticErrors(1.0, 0.5))
    assert A == pytest.approx(2.0, abs=0.05)
    assert s2 > 0.25
    p = fit_mle(LikelihoodSpec("mnr"), d).params
    assert [*p.theta, p.sigma_int**2 + 0.25, p.mu[0], p.w[0] ** 2] == pytest.approx([A, B, s2, mu, w2], rel=1e-4)


def test_mnr_requires_variance_excess():
    with pytest.raises(ValueError, match="not exceeding"):
        mnr_mle(moments(([0.0, 1.0], [0.0, 1.0])), HomoscedasticErrors(1.0, 0.1))


def test_prof_pins_fiducial():
    pinned = 0
    for s in range(10):
        d, _ = gen_mock(dataclasses.replace(FIDUCIAL, sigma_x_spread=0.0, sigma_y_spread=0.0, seed=s))
        *_, rep = prof_mle(moments(d), HomoscedasticErrors(1.0, 2.0))
        pinned += rep.boundary
    assert pinned >= 9


def test_prof_zero_x_error_is_least_squares():
    rng = np.random.default_rng(5)
    x = rng.normal(size=300)
    m = moments((x, 1.5 * x + rng.normal(0, 2, 300)))
    A, B, s2, rep = prof_mle(m, HomoscedasticErrors(0.0, 0.5))
    assert s2 == pytest.approx(m.var_y - m.cov_xy**2 / m.var_x, rel=1e-10)
    assert A == pytest.approx(m.cov_xy / m.var_x, rel=1e-10)


def test_prof_argmax_and_stationarity_sweep():
    rng = np.random.default_rng(6)
    for _ in range(300):
        vx = rng.uniform(0.5, 50)
        vy = rng.uniform(0.5, 500)
        cov = rng.uniform(-1, 1) * np.sqrt(vx * vy)
        from eivreg.analytic import SampleMoments
        m = SampleMoments(rng.normal(), rng.normal(), vx, vy, cov)
        e = HomoscedasticErrors(rng.uniform(0.05, 2), rng.uniform(0.05, 3))
        A, B, s2, rep = prof_mle(m, e)
        best = prof_loglike2(m, e, A, s2)
        assert all(best >= c[2] - 1e-12 * abs(c[2]) for c in rep.candidates)
        if not rep.boundary:
            assert max(prof_stationarity_residuals(m, e, A, s2)) < 1e-8
        else:
            assert s2 == e.sigma_y**2
