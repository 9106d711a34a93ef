from __future__ import annotations

import numpy as np
import pytest
from scipy import ndimage
from hypothesis import given, settings
from hypothesis import strategies as st

from gkn.random_fields import (DARCY_GRF, POISSON_FORCING, GridField, GrfSpec, child_rng,
                               gaussian_smooth, gradient_field, kl_variance, neumann_eigenvalues,
                               neumann_modes, sample_coefficient, sample_forcing_1d, sample_grf,
                               threshold_psi)


def test_gridfield_validation():
    with pytest.raises(ValueError):
        GridField(np.zeros(3), 1, 1)
    with pytest.raises(ValueError):
        GridField(np.zeros(10), 3, 2)
    assert GridField(np.zeros(9), 3).h == 0.5


def test_grfspec_validation():
    for kw in ({"shift": 0}, {"exponent": -1}, {"boundary": "dirichlet"}, {"kmax": 0}):
        with pytest.raises(ValueError):
            GrfSpec(**kw)


def test_zero_coefficients_give_zero_field():
    lam = neumann_eigenvalues(DARCY_GRF, 15, 2)
    f = sample_grf(DARCY_GRF, 16, 2, None, xi=np.zeros(lam.shape))
    assert np.all(f.values == 0)
    g = sample_forcing_1d(POISSON_FORCING, 33, None, xi=np.zeros(2 * 32 + 1))
    assert np.all(g.values == 0)


def test_aliasing_error():
    with pytest.raises(ValueError):
        sample_grf(GrfSpec(kmax=20), 16, 2, child_rng(0, 0))


def test_same_seed_same_field():
    a = sample_grf(DARCY_GRF, 16, 2, child_rng(3, 5)).values
    b = sample_grf(DARCY_GRF, 16, 2, child_rng(3, 5)).values
    assert a.tobytes() == b.tobytes()


def test_neumann_modes_orthonormal_in_continuum():
    # check against the closed form c_k cos(pi k x) with trapezoid quadrature on a fine grid
    phi = neumann_modes(2001, 4)
    w = np.full(2001, 1 / 2000)
    w[[0, -1]] /= 2
    gram = phi.T @ (w[:, None] * phi)
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-6)


def test_eigenvalue_formula():
    lam = neumann_eigenvalues(DARCY_GRF, 2, 2)
    assert lam[0, 0] == pytest.approx(9.0 ** -2)
    assert lam[1, 2] == pytest.approx((np.pi ** 2 * 5 + 9) ** -2)


PROBES = [(0, 0), (3, 7), (8, 8), (15, 15), (1, 14), (5, 2), (12, 4), (7, 11), (15, 0), (10, 10)]


@pytest.mark.parametrize("n, rel", [(2000, 0.05), (20000, 0.025)])
def test_grf_variance_matches_kl_sum(n, rel):
    # the standard error of a variance estimate is sqrt(2/n): 3.2% at n=2000, 1% at n=20000
    s = 16
    samples = np.stack([sample_grf(DARCY_GRF, s, 2, child_rng(0, j)).values for j in range(n)])
    var = kl_variance(DARCY_GRF, s, 2)
    for p in PROBES:
        assert samples[(slice(None), *p)].var() == pytest.approx(var[p], rel=rel)


def test_forcing_variance_and_periodicity():
    s, n = 33, 2000
    samples = np.stack([sample_forcing_1d(POISSON_FORCING, s, child_rng(2, j)).values
                        for j in range(n)])
    var = kl_variance(POISSON_FORCING, s, 1)
    for p in np.linspace(0, s - 1, 10).astype(int):
        assert samples[:, p].var() == pytest.approx(var[p], rel=0.05)
    assert np.max(np.abs(samples[:, 0] - samples[:, -1])) <= 1e-10


def test_threshold_psi_examples():
    out = threshold_psi(GridField(np.array([-1.0, 0.0, 0.3]), 3, 1)).values
    np.testing.assert_array_equal(out, [3.0, 12.0, 12.0])
    const = threshold_psi(GridField(np.full((4, 4), -2.0), 4)).values
    assert np.all(const == 3.0)


def test_psi_values_and_balance():
    fields = np.stack([sample_coefficient(DARCY_GRF, 31, child_rng(4, j)).values for j in range(500)])
    assert set(np.unique(fields)) <= {3.0, 12.0}
    assert np.mean(fields == 12.0) == pytest.approx(0.5, abs=0.03)


def test_independent_streams_are_uncorrelated():
    s = 16
    a = np.stack([sample_grf(DARCY_GRF, s, 2, child_rng(5, j)).values for j in range(500)])
    b = np.stack([sample_grf(DARCY_GRF, s, 2, child_rng(6, j)).values for j in range(500)])
    for p in [(0, 0), (4, 9), (8, 8), (15, 3)]:
        r = np.corrcoef(a[(slice(None), *p)], b[(slice(None), *p)])[0, 1]
        assert abs(r) < 0.2


def test_smoothing_constant_and_impulse():
    c = GridField(np.full((31, 31), 7.5), 31)
    np.testing.assert_allclose(gaussian_smooth(c).values, 7.5, atol=1e-12)
    imp = np.zeros((31, 31))
    imp[15, 15] = 1.0
    assert gaussian_smooth(GridField(imp, 31)).values.sum() == pytest.approx(1.0, abs=1e-12)


def test_smoothed_coefficient_strictly_inside():
    a = sample_coefficient(DARCY_GRF, 61, child_rng(0, 1))
    sm = gaussian_smooth(a).values
    # averaging keeps values in [3, 12]; they are strictly inside wherever the
    # truncated window sees both values
    assert sm.min() >= 3.0 - 1e-12 and sm.max() <= 12.0 + 1e-12
    window = ndimage.maximum_filter(a.values, size=2 * 7 + 1, mode="reflect") \
        != ndimage.minimum_filter(a.values, size=2 * 7 + 1, mode="reflect")
    mixed = sm[window]
    assert mixed.size > 0 and 3.0 < mixed.min() and mixed.max() < 12.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-50, 50), st.integers(0, 2**31))
def test_smoothing_commutes_with_constant_shift(c, seed):
    v = np.random.default_rng(seed).standard_normal((16, 16))
    lhs = gaussian_smooth(GridField(v + c, 16)).values
    rhs = gaussian_smooth(GridField(v, 16)).values + c
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_gradient_examples():
    s = 61
    x1 = np.linspace(0, 1, s)[:, None] * np.ones((1, s))
    gx, gy = gradient_field(GridField(x1, s))
    assert np.max(np.abs(gx.values - 1.0)) <= 1e-10 and np.max(np.abs(gy.values)) <= 1e-10
    gx, gy = gradient_field(GridField(np.full((s, s), 2.0), s))
    assert np.all(gx.values == 0) and np.all(gy.values == 0)
    gx, _ = gradient_field(GridField(x1 ** 2, s))
    assert gx.values[30, 10] == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        gradient_field(GridField(np.zeros((2, 2)), 2))
