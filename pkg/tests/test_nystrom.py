from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gkn.nystrom import HSDistance, constant_kernel, gaussian_kernel, hs_distance_squared, mc_rate_experiment


def test_constant_kernel_zero():
    assert hs_distance_squared(constant_kernel, [0.1, 0.7, 0.3]) == pytest.approx(0.0, abs=1e-12)


def test_single_point_matches_brute_force():
    k = gaussian_kernel(0.2)
    # brute force on a dense uniform midpoint grid, independent of Gauss-Legendre
    z = (np.arange(20000) + 0.5) / 20000
    t1 = 1.0
    cross = np.mean(k(0.5, z) ** 2)
    zz = (np.arange(4000) + 0.5) / 4000
    total = np.mean(k(zz[:, None], zz[None, :]) ** 2)
    assert hs_distance_squared(k, [0.5]) == pytest.approx(t1 - 2 * cross + total, abs=1e-6)


def test_duplicate_sample_unchanged():
    k = gaussian_kernel(0.2)
    assert hs_distance_squared(k, [0.3, 0.3]) == pytest.approx(hs_distance_squared(k, [0.3]), abs=1e-14)


def test_quadrature_floor():
    with pytest.raises(ValueError):
        HSDistance(gaussian_kernel(0.2), 100)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.05, 1.0))
def test_nonnegative(ys, sigma):
    assert hs_distance_squared(gaussian_kernel(sigma), ys) >= -1e-10


def test_rate_and_monotone():
    rep = mc_rate_experiment([10, 20, 40, 80, 160, 320], 100, sigma=0.2, seed=0)
    assert -0.6 <= rep.slope <= -0.4
    assert all(b < a for a, b in zip(rep.mean_distance, rep.mean_distance[1:]))
    assert all(d >= 0 for d in rep.mean_distance)


def test_report_deterministic_and_single_trial():
    a = mc_rate_experiment([10, 20, 40, 80], 5, seed=2)
    b = mc_rate_experiment([10, 20, 40, 80], 5, seed=2)
    assert a == b
    one = mc_rate_experiment([10, 20, 40, 80], 1, seed=2)
    assert np.isfinite(one.slope) and one.trials == 1
    with pytest.raises(ValueError):
        mc_rate_experiment([20, 10], 3)
