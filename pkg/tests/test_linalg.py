import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from proxkit.linalg import (
    EPS,
    NotPSDError,
    WeightMatrix,
    as_sym,
    eig_sym,
    is_psd,
    pinv,
    psd_sqrt,
    range_projector,
    weighted_norm,
)
from proxkit.montecarlo import build_qr, build_qs


def random_psd(rng, p, rank):
    g = rng.standard_normal((p, rank))
    return g @ g.T


def test_eig_identity_and_diagonal():
    d = eig_sym(np.eye(3))
    np.testing.assert_array_equal(d.eigenvalues, [1, 1, 1])
    assert np.all(np.max(d.eigenvectors, axis=0) == 1.0)
    np.testing.assert_allclose(eig_sym(np.diag([2.0, 0.0])).eigenvalues, [2, 0])


def test_eig_identity_eigenvectors_are_identity_columns():
    v = eig_sym(np.eye(3)).eigenvectors
    # each column is a signed unit vector made positive by the sign rule
    assert np.all(np.sort(v, axis=None)[-3:] == 1.0)
    np.testing.assert_allclose(v @ v.T, np.eye(3), atol=1e-15)


def test_eig_qr_reconstruction():
    q = build_qr(8)
    d = eig_sym(q)
    assert np.all(d.eigenvalues > 0)
    assert np.abs(d.reconstruct() - q).max() < 1e-9


def test_eig_random_reconstruction_and_orthonormality():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = int(rng.integers(1, 13))
        a = rng.standard_normal((p, p))
        a = a + a.T
        d = eig_sym(a)
        assert np.all(np.diff(d.eigenvalues) <= 0)
        scale = max(1.0, np.abs(a).max())
        assert np.abs(d.reconstruct() - a).max() <= 1e-12 * scale * p
        assert np.abs(d.eigenvectors.T @ d.eigenvectors - np.eye(p)).max() <= 1e-12 * p


def test_eig_sign_convention_deterministic():
    rng = np.random.default_rng(1)
    a = random_psd(rng, 6, 6)
    v1 = eig_sym(a).eigenvectors
    v2 = eig_sym(a.copy()).eigenvectors
    np.testing.assert_array_equal(v1, v2)
    idx = np.argmax(np.abs(v1), axis=0)
    assert np.all(v1[idx, np.arange(6)] > 0)


def test_eig_outputs_read_only():
    d = eig_sym(np.eye(2))
    with pytest.raises(ValueError):
        d.eigenvalues[0] = 3.0


def test_as_sym_rejects_asymmetric_and_nonsquare():
    with pytest.raises(ValueError):
        as_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        as_sym(np.ones((2, 3)))


def test_pinv_examples():
    np.testing.assert_array_equal(pinv(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    np.testing.assert_array_equal(pinv(np.zeros((3, 3))), np.zeros((3, 3)))


def _penrose(a, g):
    return max(
        np.abs(a @ g @ a - a).max(),
        np.abs(g @ a @ g - g).max(),
        np.abs((a @ g).T - a @ g).max(),
        np.abs((g @ a).T - g @ a).max(),
    )


def test_pinv_rank3_penrose():
    rng = np.random.default_rng(2)
    a = random_psd(rng, 5, 3)
    assert _penrose(a, pinv(a, rank_tol=1e-10)) <= 1e-9


@pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
def test_pinv_scale_covariant(c):
    rng = np.random.default_rng(3)
    a = random_psd(rng, 6, 4)
    lhs = pinv(c * a, rank_tol=1e-10)
    rhs = pinv(a, rank_tol=1e-10) / c
    assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(rhs).max()


def test_default_rank_tolerance_is_p_eps():
    d = eig_sym(np.diag([1.0, 3 * EPS, 0.0]))
    assert d.threshold() == pytest.approx(3 * EPS)
    assert d.rank() == 1


def test_range_projector_examples():
    np.testing.assert_array_equal(range_projector(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(range_projector(np.diag([2.0, 0.0])), np.diag([1.0, 0.0]))
    proj = range_projector(build_qs(build_qr(8)))
    assert np.trace(proj) == pytest.approx(7.0, abs=1e-10)
    assert np.abs(proj @ proj - proj).max() < 1e-12


def test_weighted_norm_examples():
    assert weighted_norm(np.zeros(2), WeightMatrix.identity(2)) == 0.0
    assert weighted_norm([3.0, 4.0], WeightMatrix.identity(2)) == pytest.approx(5.0)
    assert weighted_norm([1.0, 1.0], WeightMatrix(np.diag([4.0, 1.0]))) == pytest.approx(np.sqrt(5))
    with pytest.raises(ValueError):
        weighted_norm([1.0, 2.0, 3.0], WeightMatrix.identity(2))


def test_psd_sqrt_examples():
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 0.0])), np.diag([2.0, 0.0]))
    qs = build_qs(build_qr(8))
    s = psd_sqrt(qs)
    assert np.abs(s @ s.T - qs).max() < 1e-9
    with pytest.raises(NotPSDError, match="not PSD"):
        psd_sqrt(np.diag([1.0, -0.5]))


def test_weight_matrix_rejects_singular_and_caches_inverse():
    with pytest.raises(NotPSDError):
        WeightMatrix(np.diag([1.0, 0.0]))
    w = WeightMatrix([[2.0, 0.5], [0.5, 1.0]])
    assert not w.is_diagonal
    np.testing.assert_allclose(w.inverse @ w.matrix, np.eye(2), atol=1e-14)
    assert w.inverse is w.inverse
    np.testing.assert_allclose(w.factor @ w.factor.T, w.matrix)
    assert w.inner([1, 0], [0, 1]) == 0.5


def test_is_psd():
    assert is_psd(np.diag([1.0, 0.0]))
    assert not is_psd(np.diag([1.0, -1e-3]))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_pinv_range_projector_consistent(p, r, seed):
    r = min(r, p)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.zeros(p)
    s[:r] = rng.uniform(0.1, 2.0, r)
    a = (q * s) @ q.T
    g = pinv(a, rank_tol=1e-10)
    assert np.abs(a @ g - range_projector(a, rank_tol=1e-10)).max() < 1e-9
    assert eig_sym(a).rank(1e-10) == r
