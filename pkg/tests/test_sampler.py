import numpy as np
import pytest

from eivreg._nuts import NUTS, adaptation_windows, effective_sample_size, split_rhat


def _gauss_target(cov):
    prec = np.linalg.inv(cov)

    def f(z):
        g = -prec @ z
        return 0.5 * float(z @ g), g

    return f


@pytest.mark.parametrize("metric", ["dense", "diag"])
def test_nuts_recovers_gaussian_covariance(metric):
    cov = np.array([[2.0, 1.2], [1.2, 1.0]])
    draws = []
    for seed in range(4):
        s = NUTS(_gauss_target(cov), 2, np.random.default_rng(seed), metric=metric)
        draws.append(s.run(np.zeros(2), 500, 3000).draws)
    chains = np.array(draws)
    centred = chains - chains.reshape(-1, 2).mean(axis=0)
    scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
    for i in range(2):
        for j in range(i + 1):
            # each covariance entry is the mean of a per-draw product; judge it by its MC error
            prod = centred[..., i] * centred[..., j]
            mcse = prod.std() / np.sqrt(effective_sample_size(prod))
            assert abs(prod.mean() - cov[i, j]) < 5 * mcse
            assert abs(prod.mean() - cov[i, j]) / scale[i, j] < 0.15


def test_nuts_reproducible():
    f = _gauss_target(np.eye(3))
    a = NUTS(f, 3, np.random.default_rng(9)).run(np.ones(3), 100, 50).draws
    b = NUTS(f, 3, np.random.default_rng(9)).run(np.ones(3), 100, 50).draws
    np.testing.assert_array_equal(a, b)


def test_nuts_rejects_bad_start():
    s = NUTS(lambda z: (-np.inf, np.zeros(1)), 1, np.random.default_rng(0))
    with pytest.raises(ValueError, match="non-finite"):
        s.run(np.zeros(1), 10, 10)


def test_adaptation_windows():
    w = adaptation_windows(700)
    assert w[0][0] == 75 and w[-1][1] == 650
    assert all(a[1] == b[0] for a, b in zip(w, w[1:]))
    short = adaptation_windows(100)
    assert short[0][0] == 15 and short[-1][1] == 90
    assert adaptation_windows(10) == []


def test_rhat_and_ess_iid():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 2000))
    assert split_rhat(x) == pytest.approx(1.0, abs=0.01)
    assert 0.8 * x.size < effective_sample_size(x) <= x.size


def test_rhat_detects_shifted_chain():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 1000))
    x[1] += 3
    assert split_rhat(x) > 1.5


def test_ess_autocorrelated():
    rng = np.random.default_rng(3)
    rho, n = 0.8, 20000
    x = np.empty(n)
    x[0] = 0
    e = rng.normal(size=n)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    want = n * (1 - rho) / (1 + rho)
    assert effective_sample_size(x[None, :]) == pytest.approx(want, rel=0.15)


def test_ess_clamped_for_anticorrelated():
    x = np.tile([1.0, -1.0], 500)[None, :] + np.random.default_rng(4).normal(scale=1e-3, size=(1, 1000))
    assert effective_sample_size(x) <= x.size
