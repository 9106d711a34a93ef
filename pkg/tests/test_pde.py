from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gkn import pde
from gkn.random_fields import DARCY_GRF, GridField, child_rng, sample_coefficient


def _field(v):
    v = np.asarray(v, dtype=float)
    return GridField(v, v.shape[0])


def manufactured(s):
    x = np.linspace(0, 1, s)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    u = np.sin(np.pi * X1) * np.sin(np.pi * X2)
    return np.ones((s, s)), 2 * np.pi ** 2 * u, u


def test_laplacian_stencil():
    s = 7
    A = pde.assemble_darcy(_field(np.ones((s, s))), _field(np.zeros((s, s)))).matrix.toarray()
    h2 = (1 / 6) ** 2
    np.testing.assert_allclose(np.diag(A), 4 / h2)
    off = A - np.diag(np.diag(A))
    assert set(np.round(np.unique(off[off != 0]) * h2, 12)) == {-1.0}
    # interior row whose neighbours are all unknowns sums to zero
    idx = np.arange(25).reshape(5, 5)
    assert abs(A[idx[2, 2]].sum()) < 1e-9


def test_spd_on_small_grid():
    a = sample_coefficient(DARCY_GRF, 9, child_rng(0, 0))
    A = pde.assemble_darcy(a, _field(np.ones((9, 9)))).matrix
    assert abs(A - A.T).max() <= 1e-14
    assert np.all(A.diagonal() > 0)
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_nonpositive_coefficient_rejected():
    with pytest.raises(ValueError):
        pde.assemble_darcy(_field(np.zeros((5, 5))), _field(np.ones((5, 5))))


def test_cg_identity_and_residual():
    system = pde.SparseSystem(sp.identity(6, format="csr"), np.arange(6.0), 4)
    x, res, _ = pde.solve_cg(system)
    np.testing.assert_allclose(x, np.arange(6.0))
    a = sample_coefficient(DARCY_GRF, 31, child_rng(1, 0))
    system = pde.assemble_darcy(a, _field(np.ones((31, 31))))
    x, res, _ = pde.solve_cg(system, tol=1e-10)
    true = np.linalg.norm(system.rhs - system.matrix @ x) / np.linalg.norm(system.rhs)
    assert res <= 1e-10 and true <= 1e-10


def test_cg_matches_dense():
    a = sample_coefficient(DARCY_GRF, 7, child_rng(2, 0))
    system = pde.assemble_darcy(a, _field(np.ones((7, 7))))
    np.testing.assert_allclose(pde.solve_cg(system)[0], pde.solve_dense(system), atol=1e-8)


def test_cg_convergence_failure():
    a = sample_coefficient(DARCY_GRF, 31, child_rng(1, 0))
    system = pde.assemble_darcy(a, _field(np.ones((31, 31))))
    with pytest.raises(pde.ConvergenceError) as info:
        pde.solve_cg(system, max_iter=3)
    assert info.value.residual > 1e-10


def test_manufactured_solution_and_order():
    a, f, u = manufactured(61)
    assert np.max(np.abs(pde.solve_darcy(_field(a), _field(f)).values - u)) <= 1e-3
    errs = []
    for s in (31, 61, 121):
        a, f, u = manufactured(s)
        errs.append(np.max(np.abs(pde.solve_darcy(_field(a), _field(f)).values - u)))
    order = np.polyfit(np.log([1 / 30, 1 / 60, 1 / 120]), np.log(errs), 1)[0]
    assert 1.8 <= order <= 2.2


def test_zero_forcing_zero_solution():
    a = sample_coefficient(DARCY_GRF, 16, child_rng(0, 3))
    u = pde.solve_darcy(a, _field(np.zeros((16, 16)))).values
    assert np.all(u == 0)


def test_boundary_exactly_zero_and_maximum_principle():
    a = sample_coefficient(DARCY_GRF, 31, child_rng(0, 4))
    u = pde.solve_darcy(a, _field(np.ones((31, 31)))).values
    assert np.all(u[0] == 0) and np.all(u[-1] == 0) and np.all(u[:, 0] == 0) and np.all(u[:, -1] == 0)
    assert u.min() >= -1e-10


def test_uniform_scaling():
    f = _field(np.ones((21, 21)))
    u1 = pde.solve_darcy(_field(np.full((21, 21), 3.0)), f, tol=1e-13).values
    u2 = pde.solve_darcy(_field(np.full((21, 21), 6.0)), f, tol=1e-13).values
    np.testing.assert_allclose(u2, 0.5 * u1, atol=1e-10)


def test_downsample():
    v = np.random.default_rng(0).standard_normal((241, 241))
    d = pde.downsample(GridField(v, 241), 61)
    np.testing.assert_array_equal(d.values, v[::4, ::4])
    assert pde.downsample(GridField(v, 241), 241).values.tobytes() == v.tobytes()
    w = np.random.default_rng(1).standard_normal((421, 421))
    d = pde.downsample(GridField(w, 421), 211).values
    assert d[0, 0] == w[0, 0] and d[-1, -1] == w[-1, -1] and d[0, -1] == w[0, -1]
    with pytest.raises(ValueError):
        pde.downsample(GridField(v, 241), 50)


def test_green_1d_values():
    assert pde.green_1d(0.5, 0.5) == pytest.approx(0.25)
    assert pde.green_1d(0.25, 0.75) == pytest.approx(0.0625)
    assert pde.green_1d(0.75, 0.25) == pytest.approx(0.0625)
    for x in np.linspace(0, 1, 11):
        assert pde.green_1d(x, 0.0) == 0.0 and pde.green_1d(x, 1.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        pde.green_1d(1.5, 0.2)


def test_poisson_1d_green_solution():
    f = GridField(np.zeros(64), 64, 1)
    assert np.all(pde.solve_poisson_1d_green(f).values == 0)
    x = np.linspace(0, 1, 256)
    u = pde.solve_poisson_1d_green(GridField(np.ones(256), 256, 1)).values
    assert np.max(np.abs(u - x * (1 - x) / 2)) <= 1e-4
    assert u[0] == 0.0 and u[-1] == 0.0


def test_green_1d_is_inverse_kernel():
    s = 201
    x = np.linspace(0, 1, s)
    f = np.cos(3 * x) + x ** 2
    u = pde.solve_poisson_1d_green(GridField(f, s, 1)).values
    h = 1 / (s - 1)
    lap = -(u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2
    assert np.max(np.abs(lap - f[1:-1])) < 5e-3


def test_green_disk_examples():
    for tt in (0.0, 1.0, 4.0):
        assert pde.green_disk(0.0, 0.0, 0.5, tt) == pytest.approx(math.log(0.25) / (4 * math.pi), abs=1e-12)
    assert pde.green_disk(1.0, 0.3, 0.4, 2.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        pde.green_disk(0.3, 1.0, 0.3, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 2 * np.pi), st.floats(0, 0.999), st.floats(0, 2 * np.pi))
def test_green_disk_symmetry(r1, t1, r2, t2):
    num = r1 ** 2 + r2 ** 2 - 2 * r1 * r2 * math.cos(t1 - t2)
    if num <= 1e-12:
        return
    assert abs(pde.green_disk(r1, t1, r2, t2) - pde.green_disk(r2, t2, r1, t1)) <= 1e-12
