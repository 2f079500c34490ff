import numpy as np
import pytest

from eivreg.core import LikelihoodSpec, ParamVector, ValidationError, assemble_covariance, validate_dataset


def test_minimal_dataset():
    d = validate_dataset([0, 1], [1, 3], [0.1, 0.1], [0.2, 0.2])
    assert d.n == 2 and d.is_diagonal


def test_negative_uncertainty():
    with pytest.raises(ValidationError, match="negative uncertainty"):
        validate_dataset([0, 1], [1, 3], [-0.1, 0.1], [0.2, 0.2])


def test_asymmetric_covariance():
    cov = np.eye(4)
    cov[0, 1] = 1e-3
    with pytest.raises(ValidationError, match="covariance not symmetric"):
        validate_dataset([0, 1], [1, 3], full_cov=cov)


def test_non_psd_covariance_reports_eigenvalue():
    cov = np.diag([1.0, 1.0, 1.0, -0.5])
    with pytest.raises(ValidationError, match="-0.5"):
        validate_dataset([0, 1], [1, 3], full_cov=cov)


@pytest.mark.parametrize("kwargs, msg", [
    (dict(x_obs=[0, 1, 2], y_obs=[1, 3]), "dimension mismatch"),
    (dict(x_obs=[0], y_obs=[1]), "at least two"),
    (dict(x_obs=[0, np.nan], y_obs=[1, 2]), "finite"),
])
def test_shape_errors(kwargs, msg):
    with pytest.raises(ValidationError, match=msg):
        validate_dataset(kwargs["x_obs"], kwargs["y_obs"], [0.1] * len(kwargs["x_obs"]),
                         [0.1] * len(kwargs["x_obs"]))


def test_both_error_forms_rejected():
    with pytest.raises(ValidationError):
        validate_dataset([0, 1], [1, 2], [0.1, 0.1], [0.1, 0.1], full_cov=np.eye(4))


def test_dataset_is_read_only():
    d = validate_dataset([0, 1], [1, 3], [0.1, 0.1], [0.2, 0.2])
    with pytest.raises(ValueError):
        d.x_obs[0] = 5.0


@pytest.mark.parametrize("sigma_int, expected", [(0.0, 4.0), (2.0, 8.0)])
def test_assemble_diagonal(sigma_int, expected):
    d = validate_dataset([0, 1], [1, 3], [0.1, 0.3], [2, 2])
    sxx, sxy, syy = assemble_covariance(d, sigma_int)
    np.testing.assert_array_equal(syy, np.diag([expected, expected]))
    np.testing.assert_array_equal(sxy, np.zeros((2, 2)))
    # round trip of the diagonal errors
    np.testing.assert_array_equal(np.sqrt(np.diag(sxx)), d.x_err)


def test_assemble_full_adds_only_to_diagonal(rng):
    m = rng.normal(size=(6, 6))
    cov = m @ m.T + np.eye(6)
    d = validate_dataset(rng.normal(size=3), rng.normal(size=3), full_cov=cov)
    sxx, sxy, syy = assemble_covariance(d, 1.0)
    np.testing.assert_allclose(syy - cov[3:, 3:], np.eye(3), atol=1e-14)
    np.testing.assert_array_equal(sxx, cov[:3, :3])
    np.testing.assert_array_equal(sxy, cov[:3, 3:])


def test_swapped_exchanges_roles(rng):
    m = rng.normal(size=(4, 4))
    d = validate_dataset([0, 1], [2, 3], full_cov=m @ m.T + np.eye(4))
    s = d.swapped()
    np.testing.assert_array_equal(s.x_obs, d.y_obs)
    np.testing.assert_allclose(s.full_cov[:2, :2], d.full_cov[2:, 2:])
    np.testing.assert_allclose(s.swapped().full_cov, d.full_cov)


def test_spec_invariants():
    with pytest.raises(ValidationError):
        LikelihoodSpec("mnr", n_gauss=2)
    with pytest.raises(ValidationError):
        LikelihoodSpec("unif", hyperprior="hierarchical")
    with pytest.raises(ValidationError):
        LikelihoodSpec("ols")
    assert LikelihoodSpec("gmm", 3, "hierarchical").n_components == 3


def test_param_vector_invariants():
    with pytest.raises(ValidationError):
        ParamVector([1, 0], -1.0)
    with pytest.raises(ValidationError):
        ParamVector([1, 0], 1.0, mu=[2, 1], w=[1, 1])
    with pytest.raises(ValidationError):
        ParamVector([1, 0], 1.0, mu=[1, 2], w=[1, 1], weights=[0.2, 0.7])
    with pytest.raises(ValidationError):
        ParamVector([1, 0], 1.0, mu=[1], w=[0.0])
    p = ParamVector([1, 0], 1.0, mu=[1, 2], w=[1, 1], names=("A", "B"))
    np.testing.assert_allclose(p.weights, [0.5, 0.5])
