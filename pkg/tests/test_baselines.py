from __future__ import annotations

import numpy as np
import pytest

from gkn import pde
from gkn.baselines import (compute_pca, rbm_basis, rbm_solve, run_pca_nn, run_pointwise_nn,
                           run_rbm, train_pointwise_nn)
from gkn.random_fields import DARCY_GRF, GridField, child_rng, sample_coefficient


def test_pca_two_orthogonal_fields_exact():
    X = np.zeros((2, 16))
    X[0, 3] = 2.0
    X[1, 7] = -1.0
    b = compute_pca(X, 2, center=False)
    np.testing.assert_allclose(b.decode(b.encode(X)), X, atol=1e-10)


def test_pca_orthonormal_nonincreasing_and_errors():
    X = np.random.default_rng(0).standard_normal((10, 40))
    b = compute_pca(X, 6)
    np.testing.assert_allclose(b.components @ b.components.T, np.eye(6), atol=1e-10)
    assert np.all(np.diff(b.singular_values) <= 0)
    with pytest.raises(ValueError):
        compute_pca(X, 11)


def test_pca_reconstruction_nonincreasing_in_rank():
    X = np.random.default_rng(1).standard_normal((12, 30))
    errs = []
    for R in range(1, 12):
        b = compute_pca(X, R)
        errs.append(np.linalg.norm(b.decode(b.encode(X)) - X))
    assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(errs, errs[1:]))


def test_pca_gram_route_matches_covariance():
    X = np.random.default_rng(2).standard_normal((5, 9))
    b = compute_pca(X, 3)
    Xc = X - X.mean(0)
    lam, V = np.linalg.eigh(Xc.T @ Xc)
    V = V[:, ::-1][:, :3]
    for k in range(3):
        sign = np.sign(V[:, k] @ b.components[k])
        np.testing.assert_allclose(b.components[k], sign * V[:, k], atol=1e-8)
    np.testing.assert_allclose(b.singular_values ** 2, lam[::-1][:3], rtol=1e-8)


def test_pca_projection_idempotent():
    X = np.random.default_rng(3).standard_normal((8, 50))
    b = compute_pca(X, 4)
    Y = np.random.default_rng(4).standard_normal((3, 50))
    c = b.encode(Y)
    np.testing.assert_allclose(b.encode(b.decode(c)), c, atol=1e-10)


def test_pca_degenerate_rank_warns():
    X = np.tile(np.arange(5.0), (4, 1))
    X[1] += 1.0
    with pytest.warns(UserWarning):
        b = compute_pca(X, 3)
    assert b.rank == 1


def _pairs(small_dataset, s, idx):
    ch = small_dataset.at_resolution(s, idx)
    return ch["a"], ch["u"]


def test_rbm_complete_basis_matches_fd(small_dataset):
    a, u = _pairs(small_dataset, 16, np.arange(1))
    f = np.ones((16, 16))
    fd = pde.solve_darcy(GridField(a[0], 16), GridField(f, 16), tol=1e-10).values
    pred, _ = rbm_solve(a[0], f, np.eye(14 * 14))
    # CG stops at relative residual 1e-10; the direct Galerkin solve is exact
    assert np.linalg.norm(pred - fd) / np.linalg.norm(fd) <= 1e-8


def test_rbm_residual_orthogonality_and_zero_forcing(small_dataset):
    a, u = _pairs(small_dataset, 16, np.arange(12))
    U = rbm_basis(u[:8], 5)
    for k in range(8, 12):
        pred, c = rbm_solve(a[k], np.ones((16, 16)), U)
        system = pde.assemble_darcy(GridField(a[k], 16), GridField(np.ones((16, 16)), 16))
        res = U.T @ (system.matrix @ (U @ c) - system.rhs)
        assert np.max(np.abs(res)) <= 1e-8 * np.linalg.norm(system.rhs)
    pred, _ = rbm_solve(a[9], np.zeros((16, 16)), U)
    assert np.all(pred == 0)


def test_rbm_error_decreases_with_rank(small_dataset):
    a, u = _pairs(small_dataset, 16, np.arange(12))
    errs = [run_rbm(u[:8], a[8:], u[8:], R) for R in (1, 4, 8)]
    assert errs[0] > errs[1] > errs[2]


def test_rbm_singular_fallback_warns(small_dataset):
    a, u = _pairs(small_dataset, 16, np.arange(2))
    U = np.zeros((196, 2))
    U[0, 0] = 1.0
    with pytest.warns(UserWarning):
        rbm_solve(a[0], np.ones((16, 16)), U)


def test_pointwise_nn_constant_target_and_zero_epochs():
    rng = np.random.default_rng(0)
    a = rng.choice([3.0, 12.0], (6, 8, 8))
    u = np.full((6, 8, 8), 0.5)
    assert run_pointwise_nn(a[:4], u[:4], a[4:], u[4:], hidden=(8,), epochs=50, lr=1e-2) < 1e-3
    err0 = run_pointwise_nn(a[:4], u[:4], a[4:], u[4:], hidden=(8,), epochs=0)
    assert np.isfinite(err0)


def test_pointwise_nn_identical_at_coinciding_nodes(small_dataset):
    a31, u31 = _pairs(small_dataset, 31, np.arange(4))
    model = train_pointwise_nn(a31, u31, hidden=(8,), epochs=2)
    p31 = model.predict(a31[0])
    p16 = model.predict(a31[0][::2, ::2])
    np.testing.assert_array_equal(p31[::2, ::2], p16)


def test_pca_nn_identity_task_near_truncation_floor():
    a = np.stack([sample_coefficient(DARCY_GRF, 16, child_rng(5, j)).values for j in range(220)])
    R = 10
    b = compute_pca(a[:200], R)
    floor = np.mean([np.linalg.norm(b.decode(b.encode(x)).reshape(16, 16) - x) / np.linalg.norm(x)
                     for x in a[200:]])
    err = run_pca_nn(a[:200], a[:200], a[200:], a[200:], R_in=R, R_out=R, hidden=(64,), epochs=300,
                     lr=1e-3, seed=0)
    assert err <= floor + 0.01


def test_pca_nn_rejects_other_mesh(small_dataset):
    a, u = _pairs(small_dataset, 16, np.arange(6))
    a31, u31 = _pairs(small_dataset, 31, np.arange(6))
    with pytest.raises(ValueError):
        run_pca_nn(a, u, a31, u31, R_in=3, R_out=3, epochs=1)
