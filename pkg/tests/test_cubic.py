import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eivreg.cubic import CubicCoeffs, real_roots, real_roots_oracle, real_roots_with_branch


def _close(got, want, tol=1e-12):
    return len(got) == len(want) and np.allclose(sorted(got), sorted(want), rtol=0, atol=tol)


@pytest.mark.parametrize("coeffs, want, branch", [
    ((1, -6, 11, -6), [1, 2, 3], "three"),
    ((1, 0, 0, 1), [-1], "single"),
    ((1, 0, -3, 2), [-2, 1, 1], "three"),
])
def test_factored_cases(coeffs, want, branch):
    roots, b = real_roots_with_branch(coeffs)
    assert _close(roots, want) and b == branch


def test_deltas():
    c = CubicCoeffs(1, -6, 11, -6)
    assert c.delta0 == 3 and c.delta1 == 0


def test_triple_root():
    assert real_roots(2, 0, 0, 0) == [0.0, 0.0, 0.0]
    assert _close(real_roots_oracle(2, 0, 0, 0), [0, 0, 0])
    roots, branch = real_roots_with_branch(1, -3, 3, -1)
    assert _close(roots, [1, 1, 1], 1e-5)


def test_not_a_cubic():
    with pytest.raises(ValueError, match="not a cubic"):
        real_roots(0, 1, 2, 3)


def test_oracle_on_known_polynomial():
    assert _close(real_roots_oracle(1, -6, 11, -6), [1, 2, 3], 1e-10)


coef = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(coef.filter(lambda a: abs(a) > 1e-3), coef, coef, coef, st.floats(-1e3, 1e3).filter(lambda s: abs(s) > 1e-3))
def test_scale_invariance_and_residual(a, b, c, d, lam):
    r1 = sorted(real_roots(a, b, c, d))
    r2 = sorted(real_roots(lam * a, lam * b, lam * c, lam * d))
    assert len(r1) == len(r2)
    np.testing.assert_allclose(r1, r2, rtol=1e-10, atol=1e-10)
    scale = max(abs(a), abs(b), abs(c), abs(d))
    for r in r1:
        assert abs(((a * r + b) * r + c) * r + d) <= 1e-10 * scale * (1 + abs(r)) ** 3


def test_random_sweep_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        a, b, c, d = rng.uniform(-10, 10, 4)
        got, ref = sorted(real_roots(a, b, c, d)), sorted(real_roots_oracle(a, b, c, d))
        assert len(got) == len(ref)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-8 * max(1.0, max(map(abs, ref))))
