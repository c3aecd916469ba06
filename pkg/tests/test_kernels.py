"""The numba loop kernels and the numpy kernels must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solarcast import kernels
from solarcast._accel import HAS_NUMBA, USE_NUMBA, backend_name


def test_backend_flag_matches_dispatch():
    expected = kernels.adam_update_loop if USE_NUMBA else kernels.adam_update_np
    assert kernels.adam_update is expected
    assert kernels.dense_forward is kernels.dense_forward_np
    assert backend_name() == ("numba" if USE_NUMBA else "numpy")


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
def test_loop_kernels_are_compiled():
    assert hasattr(kernels.dense_forward_loop, "py_func")


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20), k=st.integers(1, 12), m=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_dense_forward_and_backward_agree(n, k, m, seed):
    rng = np.random.default_rng(seed)
    W, b, X, dZ = rng.normal(size=(m, k)), rng.normal(size=m), rng.normal(size=(n, k)), rng.normal(size=(n, m))
    np.testing.assert_allclose(kernels.dense_forward_loop(W, b, X), kernels.dense_forward_np(W, b, X),
                               rtol=1e-12, atol=1e-12)
    for a, c in zip(kernels.dense_backward_loop(W, X, dZ), kernels.dense_backward_np(W, X, dZ)):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-12)


def test_mae_agrees_including_zero_residual():
    p = np.array([2.0, 0.0, 1.0, -3.5])
    t = np.array([1.0, 1.0, 1.0, 0.5])
    la, ga = kernels.mae_loop(p, t)
    lb, gb = kernels.mae_np(p, t)
    assert la == lb == pytest.approx(1.5)
    np.testing.assert_array_equal(ga, gb)
    assert ga[2] == 0.0


def test_adam_update_agrees():
    rng = np.random.default_rng(3)
    shape = (4, 5)
    states = [[rng.normal(size=shape), np.zeros(shape), np.zeros(shape)] for _ in range(2)]
    states[1] = [a.copy() for a in states[0]]
    for t in range(1, 6):
        g = rng.normal(size=shape)
        kernels.adam_update_loop(states[0][0], g, states[0][1], states[0][2], 1e-3, 0.9, 0.999, 1e-8, t)
        kernels.adam_update_np(states[1][0], g, states[1][1], states[1][2], 1e-3, 0.9, 0.999, 1e-8, t)
    for a, b in zip(*states):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_sun_angles_agree_over_validity_window():
    t = np.linspace(-6.3e8, 4.1e9, 5001)  # 1950 .. 2099
    for lat, lon in [(42.56, -83.64), (-33.9, 151.2), (69.6, 18.9), (0.0, 0.0), (-89.0, 179.9)]:
        np.testing.assert_allclose(kernels.sun_angles_loop(lat, lon, t), kernels.sun_angles_np(lat, lon, t),
                                   rtol=0, atol=1e-9)


def test_calendar_handles_leap_years_and_pre_epoch():
    # Dec 31 of a leap year is day 366; 1950-01-01 is day 1
    from datetime import datetime, timezone

    for y, m, d, doy, ndays in [(2024, 12, 31, 366, 366), (1950, 1, 1, 1, 365), (2000, 3, 1, 61, 366),
                                (2100, 3, 1, 60, 365)]:
        days = (datetime(y, m, d, tzinfo=timezone.utc) - datetime(1970, 1, 1, tzinfo=timezone.utc)).days
        yy, got_doy, got_n = kernels._civil_year_doy(days)
        assert (yy, got_doy, got_n) == (y, doy, ndays)


def test_haversine_agree():
    rng = np.random.default_rng(9)
    lats, lons = rng.uniform(-90, 90, 500), rng.uniform(-180, 180, 500)
    np.testing.assert_allclose(kernels.haversine_loop(10.0, 20.0, lats, lons),
                               kernels.haversine_np(10.0, 20.0, lats, lons), rtol=1e-12, atol=1e-6)
