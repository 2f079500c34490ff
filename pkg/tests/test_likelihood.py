import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

import oracles
from eivreg.core import Dataset, LikelihoodSpec, ParamVector, validate_dataset
from eivreg.likelihood import (LikelihoodDomainError, SingularCovarianceError, diag_loglike_and_grad,
                               hierarchical_hyperprior_logdensity, linearise, loglike, loglike_general,
                               loglike_gmm_diag, loglike_mnr_diag, loglike_prof_diag, loglike_unif_diag,
                               scaled_inv_chi2_logpdf)
from eivreg.models import expression_model, linear


def _data(rng, n=6, sx_lo=0.1):
    return validate_dataset(rng.normal(size=n) * 2, rng.normal(size=n) * 2, rng.uniform(sx_lo, 1.5, n),
                            rng.uniform(0.1, 1.5, n))


def test_unif_standard_normal_at_mean():
    d = Dataset(np.array([0.0]), np.array([0.0]), np.array([0.0]), np.array([1.0]))
    assert loglike_unif_diag(d, [0.0, 0.0], 0.0) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)


def test_zero_x_error_is_gaussian_and_prof_equals_unif(rng):
    d = validate_dataset(rng.normal(size=8), rng.normal(size=8), np.zeros(8), rng.uniform(0.2, 1, 8))
    ref = stats.norm.logpdf(d.y_obs, 1.3 * d.x_obs - 0.2, np.sqrt(d.y_err**2 + 0.3**2)).sum()
    assert loglike_unif_diag(d, [1.3, -0.2], 0.3) == pytest.approx(ref, rel=1e-13)
    assert loglike_prof_diag(d, [1.3, -0.2], 0.3) == pytest.approx(ref, rel=1e-13)


def test_prof_substitution_identity():
    args = (0.4, 1.9, 0.7, 0.5, 0.3, 1.6, -0.2)
    d = Dataset(*(np.array([v]) for v in args[:4]))
    val = loglike_prof_diag(d, args[5:], args[4], include_x_norm=True)
    assert val == pytest.approx(oracles.prof_point_closed(*args), abs=1e-12)
    assert val == pytest.approx(oracles.prof_point_max(*args), abs=1e-10)


def test_single_point_quadrature():
    args = (1.1, -0.4, 0.8, 0.6, 0.5, -1.2, 0.3)
    d = Dataset(*(np.array([v]) for v in args[:4]))
    assert loglike_unif_diag(d, args[5:], args[4]) == pytest.approx(oracles.unif_point_quad(*args), abs=1e-9)
    mnr_ref = oracles.gmm_point_quad(*args, [1.0], [0.4], [1.7])
    assert loglike_mnr_diag(d, args[5:], args[4], 0.4, 1.7) == pytest.approx(mnr_ref, abs=1e-9)
    gmm_ref = oracles.gmm_point_quad(*args, [0.3, 0.7], [-3.0, 4.0], [0.5, 0.8])
    assert loglike_gmm_diag(d, args[5:], args[4], [0.3, 0.7], [-3.0, 4.0], [0.5, 0.8]) == pytest.approx(
        gmm_ref, abs=1e-9)


def test_mnr_wide_prior_limit(rng):
    d = _data(rng)
    w, mu = 1e6, 0.3
    penalty = stats.norm.logpdf(d.x_obs, mu, w).sum()
    assert loglike_mnr_diag(d, [0.8, 0.1], 0.4, mu, w) - penalty == pytest.approx(
        loglike_unif_diag(d, [0.8, 0.1], 0.4), abs=1e-8)


def test_mnr_zero_x_error_separable(rng):
    d = validate_dataset(rng.normal(size=5), rng.normal(size=5), np.zeros(5), rng.uniform(0.2, 1, 5))
    ref = (stats.norm.logpdf(d.y_obs, 2 * d.x_obs + 1, np.sqrt(d.y_err**2 + 0.25)).sum()
           + stats.norm.logpdf(d.x_obs, 0.5, 1.5).sum())
    assert loglike_mnr_diag(d, [2, 1], 0.5, 0.5, 1.5) == pytest.approx(ref, rel=1e-13)


def test_gmm_degeneracies(rng):
    d = _data(rng)
    mnr = loglike_mnr_diag(d, [1, 0], 0.3, 0.2, 1.1)
    assert loglike_gmm_diag(d, [1, 0], 0.3, [1.0], [0.2], [1.1]) == pytest.approx(mnr, rel=1e-12)
    assert loglike_gmm_diag(d, [1, 0], 0.3, [0.3, 0.7], [0.2, 0.2], [1.1, 1.1]) == pytest.approx(mnr, rel=1e-12)


def test_gmm_far_components_stable():
    d = Dataset(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([0.1, 0.1]), np.array([0.1, 0.1]))
    val = loglike_gmm_diag(d, [1, 0], 0.0, [0.5, 0.5], [0.0, 500.0], [0.5, 0.5])
    assert np.isfinite(val)


def test_domain_errors(rng):
    d = Dataset(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.zeros(2), np.zeros(2))
    with pytest.raises(LikelihoodDomainError):
        loglike_unif_diag(d, [1, 0], 0.0)
    with pytest.raises(LikelihoodDomainError):
        loglike_prof_diag(d, [1, 0], 0.0)
    with pytest.raises(ValueError):
        loglike_mnr_diag(_data(rng), [1, 0], 0.1, 0.0, -1.0)
    with pytest.raises(ValueError):
        loglike_gmm_diag(_data(rng), [1, 0], 0.1, [0.5, 0.5], [0, 1], [1.0, 0.0])


def test_permutation_invariance(rng):
    d = _data(rng, 7)
    perm = rng.permutation(7)
    dp = validate_dataset(d.x_obs[perm], d.y_obs[perm], d.x_err[perm], d.y_err[perm])
    for f, extra in ((loglike_unif_diag, ()), (loglike_prof_diag, ()), (loglike_mnr_diag, (0.1, 1.2))):
        assert f(d, [0.7, 0.2], 0.4, *extra) == pytest.approx(f(dp, [0.7, 0.2], 0.4, *extra), rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3))
def test_translation_covariance(c, A, B):
    rng = np.random.default_rng(0)
    d = _data(rng)
    ds = validate_dataset(d.x_obs + c, d.y_obs, d.x_err, d.y_err)
    for f, e1, e2 in ((loglike_unif_diag, (), ()), (loglike_prof_diag, (), ()),
                      (loglike_mnr_diag, (0.3, 1.4), (0.3 + c, 1.4))):
        assert f(ds, [A, B - A * c], 0.5, *e2) == pytest.approx(f(d, [A, B], 0.5, *e1), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("method", ["unif", "prof", "mnr", "gmm"])
def test_gradients_match_finite_differences(rng, method):
    d = _data(rng, 7)
    model = expression_model("a*x**2 + b*x + c", ["a", "b", "c"])
    th, si = np.array([0.3, 1.1, -0.4]), 0.4
    K = 2 if method == "gmm" else 1
    mu, w = np.array([-0.5, 0.7])[:K], np.array([0.8, 1.3])[:K]
    wt = np.array([0.4, 0.6]) if K == 2 else np.array([1.0])

    def f(th=th, si=si, mu=mu, w=w, wt=wt):
        return diag_loglike_and_grad(method, d, th, si, mu, w, wt, model, include_x_norm=True)[0]

    _, g = diag_loglike_and_grad(method, d, th, si, mu, w, wt, model, include_x_norm=True)

    def fd(fun, v, i):
        h = 1e-6 * (1 + abs(v[i]))
        vp, vm = v.copy(), v.copy()
        vp[i] += h
        vm[i] -= h
        return (fun(vp) - fun(vm)) / (2 * h)

    for i in range(3):
        assert g["theta"][i] == pytest.approx(fd(lambda v: f(th=v), th, i), rel=1e-5)
    assert g["sigma_int"] == pytest.approx(fd(lambda v: f(si=v[0]), np.array([si]), 0), rel=1e-5)
    if method in ("mnr", "gmm"):
        for k in range(K):
            assert g["mu"][k] == pytest.approx(fd(lambda v: f(mu=v), mu.copy(), k), rel=1e-5)
            assert g["w"][k] == pytest.approx(fd(lambda v: f(w=v), w.copy(), k), rel=1e-5)
            assert g["weights"][k] == pytest.approx(fd(lambda v: f(wt=v), wt.copy(), k), rel=1e-5)


def test_scaled_inv_chi2():
    # closed form at x = s^2 with nu = 1: sqrt(1/(2 pi)) / s^2 * exp(-1/2)
    s2 = 0.8
    want = 0.5 * np.log(1 / (2 * np.pi)) - np.log(s2) - 0.5
    assert scaled_inv_chi2_logpdf(s2, 1, s2) == pytest.approx(want, rel=1e-13)
    assert scaled_inv_chi2_logpdf(0.7, 3, 0.8) == pytest.approx(stats.invgamma(a=1.5, scale=1.2).logpdf(0.7))
    total, _ = integrate.quad(lambda v: np.exp(scaled_inv_chi2_logpdf(v, 1, 0.6)), 0, np.inf, limit=500)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_hierarchical_prior_mean_term():
    mu_star, u2, w2 = 0.3, 1.0, 0.9
    w = np.array([0.7, 1.5])
    val = hierarchical_hyperprior_logdensity([mu_star, mu_star], w, mu_star, u2, w2)
    rest = sum(scaled_inv_chi2_logpdf(v**2, 1, w2) for v in w) + scaled_inv_chi2_logpdf(u2, 1, w2)
    assert val - rest == pytest.approx(2 * -0.5 * np.log(2 * np.pi), rel=1e-13)
    with pytest.raises(ValueError):
        hierarchical_hyperprior_logdensity([0.0], [1.0], 0.0, -1.0, 1.0)


def test_linearise_straight_line():
    lin = linearise(linear(), np.array([1.0, 2.0]), [3.0, -1.0])
    np.testing.assert_array_equal(lin.G, [3, 3])
    np.testing.assert_array_equal(lin.intercepts, [-1, -1])


def test_general_matches_diagonal(rng):
    for _ in range(20):
        d = _data(rng)
        th, si, mu, w = rng.normal(size=2), rng.uniform(0, 1), rng.normal(), rng.uniform(0.5, 2)
        assert loglike_general("unif", d, None, th, si) == pytest.approx(loglike_unif_diag(d, th, si), rel=1e-10)
        assert loglike_general("prof", d, None, th, si) == pytest.approx(
            loglike_prof_diag(d, th, si, include_x_norm=True), rel=1e-10)
        assert loglike_general("mnr", d, None, th, si, mu, w) == pytest.approx(
            loglike_mnr_diag(d, th, si, mu, w), rel=1e-10)


def test_general_nonlinear_matches_diagonal(rng):
    d = _data(rng)
    model = expression_model("a * exp(b * x)", ["a", "b"])
    th = [0.8, 0.3]
    assert loglike_general("unif", d, model, th, 0.2) == pytest.approx(
        loglike_unif_diag(d, th, 0.2, model), rel=1e-10)
    assert loglike_general("mnr", d, model, th, 0.2, 0.1, 1.1) == pytest.approx(
        loglike_mnr_diag(d, th, 0.2, 0.1, 1.1, model), rel=1e-10)


def test_general_unif_prof_differ_only_in_normalisation(rng):
    cov = oracles.random_dense_cov(rng, n=3)
    d = validate_dataset(rng.normal(size=3), rng.normal(size=3), full_cov=cov)
    th, si = [1.2, -0.3], 0.4
    from eivreg.core import assemble_covariance
    sxx, sxy, syy = assemble_covariance(d, si)
    G = 1.2 * np.eye(3)
    D = syy + G @ sxx @ G.T - sxy.T @ G.T - G @ sxy
    full = np.block([[sxx, sxy], [sxy.T, syy]])
    diff = loglike_general("unif", d, None, th, si) - loglike_general("prof", d, None, th, si)
    assert diff == pytest.approx(-0.5 * np.linalg.slogdet(2 * np.pi * D)[1]
                                 + 0.5 * np.linalg.slogdet(2 * np.pi * full)[1], rel=1e-10)


def test_general_dense_pair_quadrature():
    rng = np.random.default_rng(3)
    cov = oracles.random_dense_cov(rng)
    x, y = np.array([-0.2, 0.9]), np.array([0.4, 2.2])
    d = validate_dataset(x, y, full_cov=cov)
    assert loglike_general("unif", d, None, [1.1, 0.2], 0.3) == pytest.approx(
        oracles.dense_pair_quad(x, y, cov, 0.3, 1.1, 0.2), abs=1e-6)
    assert loglike_general("mnr", d, None, [1.1, 0.2], 0.3, 0.5, 1.2) == pytest.approx(
        oracles.dense_pair_quad(x, y, cov, 0.3, 1.1, 0.2, 0.5, 1.2), abs=1e-6)


def test_general_singular_reports_conditioning():
    d = validate_dataset([0.0, 1.0], [0.0, 1.0], full_cov=np.zeros((4, 4)))
    with pytest.raises(SingularCovarianceError, match="condition"):
        loglike_general("unif", d, None, [1.0, 0.0], 0.0)


def test_general_rejects_gmm(rng):
    with pytest.raises(NotImplementedError):
        loglike_general("gmm", _data(rng), None, [1.0, 0.0], 0.1)


def test_dispatch(rng):
    d = _data(rng)
    p = ParamVector([1.0, 0.5], 0.3, mu=[0.1], w=[1.2])
    assert loglike(LikelihoodSpec("mnr"), d, linear(), p) == pytest.approx(loglike_mnr_diag(d, [1, 0.5], 0.3, 0.1, 1.2))
