import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import box_qp_projection, random_spd
from proxkit.linalg import WeightMatrix, weighted_norm
from proxkit.penalty import (
    AdaptiveLasso,
    BoxIndicator,
    ElasticNet,
    GroupLasso,
    Lasso,
    Ridge,
    conjugate_polyhedron,
)
from proxkit.prox import (
    NonConvergenceError,
    ProxOptions,
    UnboundedProblemError,
    conjugate_prox,
    extended_penalty,
    kernel_condition,
    kkt_residual,
    plse_solve,
    project_polyhedron,
    prox,
)
from proxkit.estimators import Dataset, ridge_initial


def lasso_prox_by_sign_enumeration(w, lam, x):
    """Minimise 0.5||x-b||_W^2 + lam||b||_1 by trying every sign pattern."""
    p = x.size
    best, best_obj = None, np.inf
    for signs in itertools.product((-1, 0, 1), repeat=p):
        s = np.array(signs, dtype=float)
        on = s != 0
        b = np.zeros(p)
        if on.any():
            # stationarity on the support: W_SS b_S = (W x)_S - lam s_S
            b[on] = np.linalg.solve(w[np.ix_(on, on)], (w @ x)[on] - lam * s[on])
            if np.any(np.sign(b[on]) != s[on]):
                continue
        obj = 0.5 * (x - b) @ w @ (x - b) + lam * np.abs(b).sum()
        if obj < best_obj:
            best, best_obj = b, obj
    return best


def test_prox_closed_form_lasso_identity():
    r = prox(Lasso(), 1.0, WeightMatrix.identity(3), [2, -0.5, 0])
    np.testing.assert_array_equal(r.point, [1, 0, 0])
    assert r.path == "closed_form"


@pytest.mark.parametrize("f", [Lasso(), Ridge(), GroupLasso(((0,), (1,))), BoxIndicator([-1, -1], [1, 1])],
                         ids=lambda f: f.kind)
def test_prox_lambda_zero_is_identity(f):
    x = np.array([0.3, -4.0])
    w = WeightMatrix([[2.0, 0.5], [0.5, 1.0]])
    r = prox(f, 0.0, w, x)
    np.testing.assert_array_equal(r.point, x)
    np.testing.assert_array_equal(conjugate_prox(f, 0.0, w, x), 0.0)


def test_prox_2x2_against_sign_enumeration():
    w = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = np.array([1.0, 1.0])
    got = prox(Lasso(), 0.3, WeightMatrix(w), x)
    assert got.path == "iterative"
    np.testing.assert_allclose(got.point, lasso_prox_by_sign_enumeration(w, 0.3, x), atol=1e-8)


def test_prox_random_against_sign_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = int(rng.integers(2, 5))
        w = random_spd(rng, p, cond=1e3)
        x = rng.standard_normal(p) * 2
        lam = float(rng.uniform(0.01, 2))
        got = prox(Lasso(), lam, WeightMatrix(w), x).point
        np.testing.assert_allclose(got, lasso_prox_by_sign_enumeration(w, lam, x), atol=1e-8)


def test_diagonal_weight_closed_form_rescales():
    w = WeightMatrix(np.diag([4.0, 1.0]))
    r = prox(Lasso(), 2.0, w, [3.0, 3.0])
    assert r.path == "closed_form"
    np.testing.assert_allclose(r.point, [2.5, 1.0])


def test_scalar_weight_group_lasso_closed_form():
    w = WeightMatrix(2.0 * np.eye(3))
    r = prox(GroupLasso(((0, 1), (2,))), 2.0, w, [3.0, 4.0, 0.5])
    assert r.path == "closed_form"
    np.testing.assert_allclose(r.point, [2.4, 3.2, 0.0])


def test_conjugate_prox_example():
    np.testing.assert_array_equal(conjugate_prox(Lasso(), 1.0, WeightMatrix.identity(3), [2, -0.5, 0]), [1, -0.5, 0])


def test_project_polyhedron_examples():
    w = WeightMatrix.identity(3)
    c = conjugate_polyhedron(Lasso(), 0.7, w)
    np.testing.assert_allclose(project_polyhedron(c, w, [2.0, -0.3, -5.0]), [0.7, -0.3, -0.7])
    rng = np.random.default_rng(1)
    wm = random_spd(rng, 3)
    w = WeightMatrix(wm)
    c = conjugate_polyhedron(AdaptiveLasso([1.0, 2.0, 0.5]), 1.0, w)
    inside = np.linalg.solve(wm, [0.2, -0.5, 0.1])
    np.testing.assert_allclose(project_polyhedron(c, w, inside), inside, atol=1e-12)
    for _ in range(50):
        x = rng.standard_normal(3) * 4
        got = project_polyhedron(c, w, x)
        np.testing.assert_allclose(got, box_qp_projection(wm, c.bounds, x), atol=1e-7)


def test_project_polyhedron_weight_mismatch():
    c = conjugate_polyhedron(Lasso(), 1.0, WeightMatrix.identity(2))
    with pytest.raises(ValueError):
        project_polyhedron(c, WeightMatrix(np.diag([1.0, 2.0])), [1.0, 1.0])


PENALTIES = [
    Lasso(),
    AdaptiveLasso([0.5, 1.0, 2.0, np.inf]),
    GroupLasso(((0, 2), (1, 3))),
    Ridge(),
    ElasticNet(0.6),
    BoxIndicator([-1.0, -0.5, 0.0, -2.0], [1.0, 0.5, 2.0, 2.0]),
]


@pytest.mark.parametrize("f", PENALTIES, ids=lambda f: f.kind)
def test_prox_kkt_and_nonexpansive(f):
    rng = np.random.default_rng(11)
    for _ in range(30):
        w = WeightMatrix(random_spd(rng, 4, cond=1e3))
        lam = float(rng.uniform(0.01, 3))
        x, y = rng.standard_normal((2, 4)) * 3
        bx, by = prox(f, lam, w, x), prox(f, lam, w, y)
        # W(x - prox) lies in lam * subdifferential at prox
        assert kkt_residual(w.matrix, w.matrix @ x, f, lam, bx.point) <= 1e-9
        assert weighted_norm(bx.point - by.point, w) <= weighted_norm(x - y, w) + 1e-9


def test_iterative_path_yields_exact_zeros():
    rng = np.random.default_rng(3)
    w = WeightMatrix(random_spd(rng, 5))
    x = rng.standard_normal(5)
    lam_max = np.abs(w.matrix @ x).max()  # smallest lambda giving the zero solution
    assert np.all(prox(Lasso(), 1.01 * lam_max, w, x).point == 0.0)
    b = prox(Lasso(), 0.5 * lam_max, w, x)
    assert b.path == "iterative" and np.any(b.point == 0.0) and np.any(b.point != 0.0)


def test_nonconvergence_carries_last_iterate():
    w = WeightMatrix(random_spd(np.random.default_rng(4), 5, cond=1e4))
    with pytest.raises(NonConvergenceError) as info:
        prox(GroupLasso(((0, 1, 2), (3, 4))), 0.5, w, np.arange(5.0), ProxOptions(max_iters=2))
    assert info.value.last_iterate.shape == (5,)
    assert info.value.residual > 0


def test_plse_examples():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((40, 4))
    y = x @ [1.0, -2.0, 0.0, 0.5] + rng.standard_normal(40)
    assert np.all(plse_solve(x, y, Lasso(), 1e6).point == 0)
    ols = np.linalg.solve(x.T @ x, x.T @ y)
    np.testing.assert_allclose(plse_solve(x, y, Lasso(), 0.0).point, ols, atol=1e-8)


def test_plse_rank_deficient_lambda_zero_directs_to_ridgeless():
    x = np.ones((10, 2))
    with pytest.raises(UnboundedProblemError, match="ridgeless"):
        plse_solve(x, np.arange(10.0), Lasso(), 0.0)


def test_plse_kkt():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((50, 6))
    y = x @ rng.standard_normal(6) + rng.standard_normal(50)
    for f in PENALTIES[:1] + [AdaptiveLasso([1.0] * 6), GroupLasso(((0, 1, 2), (3, 4, 5))), ElasticNet(0.5)]:
        r = plse_solve(x, y, f, 0.1)
        assert kkt_residual(x.T @ x / 50, x.T @ y / 50, f, 0.1, r.point) <= 1e-9


def test_elastic_net_ridge_weight_identity():
    """Lasso prox under lam2 I + Q_n of the ridge estimate equals the elastic-net-type PLSE.

    With W = lam2 I + Q_n the prox objective is, up to constants,
    0.5 b'Q_n b - b'X'y/n + 0.5 lam2 ||b||^2 + lam1 ||b||_1. Written as a
    single penalty lam * (w||b||_1 + (1-w)/2 ||b||^2) this needs
    lam * w = lam1 and lam * (1 - w) = lam2.
    """
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.standard_normal((30, 5))
        y = x @ rng.standard_normal(5) + rng.standard_normal(30)
        lam1, lam2 = rng.uniform(0.01, 0.5, 2)
        d = Dataset(x, y)
        w = WeightMatrix(lam2 * np.eye(5) + d.gram())
        via_prox = prox(Lasso(), lam1, w, ridge_initial(d, lam2)).point
        lam = lam1 + lam2
        direct = plse_solve(x, y, ElasticNet(lam1 / lam), lam).point
        np.testing.assert_allclose(via_prox, direct, atol=1e-6)


def test_extended_penalty():
    q = np.array([[2.0, 0.5], [0.5, 1.0]])
    fbar = extended_penalty(Lasso(), 0.3, WeightMatrix(q), q)
    beta = np.array([1.0, -2.0])
    assert fbar(beta) == pytest.approx(3.0)
    wbar = q + np.eye(2)
    f_big = extended_penalty(Lasso(), 1e12, wbar, q)
    assert f_big(beta) == pytest.approx(3.0, abs=1e-9)
    with pytest.raises(ValueError, match="not convex"):
        extended_penalty(Lasso(), 1.0, np.eye(2), q)


def test_kernel_condition():
    q = np.diag([1.0, 0.0])
    assert kernel_condition(q, q)
    assert kernel_condition(np.eye(2), q)
    assert not kernel_condition(np.diag([1.0, 0.0]), np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10))
def test_moreau_identity_and_polyhedron_membership(seed, lam):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 6))
    w = WeightMatrix(random_spd(rng, p, cond=1e3))
    f = AdaptiveLasso(rng.uniform(0.2, 4.0, p))
    x = rng.standard_normal(p) * 3
    b = prox(f, lam, w, x).point
    theta = conjugate_prox(f, lam, w, x)
    assert np.max(np.abs(b + theta - x)) <= np.max(np.spacing(np.abs(x) + np.abs(b)))
    assert conjugate_polyhedron(f, lam, w).contains(theta, tol=1e-9)
