import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from geodesic_compass import kernels

legs_arrays = hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 8)),
                         elements=st.floats(0.0, 5.0))


def _counts(legs, data):
    return np.array([data.draw(st.integers(0, legs.shape[1])) for _ in range(legs.shape[0])], dtype=np.int64)


@settings(max_examples=50, deadline=None)
@given(legs_arrays, st.floats(0.0, 3.0), st.integers(0, 3), st.data())
def test_backends_agree(legs, c, start, data):
    counts = _counts(legs, data)
    for name in ("row_log_cosh_sum", "row_log_sinh_sum", "row_cos_product"):
        a = getattr(kernels, name + "_numpy")(legs, counts, c, start)
        b = getattr(kernels, name + "_numba")(legs, counts, c, start)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


def test_log_cosh_is_overflow_free():
    x = np.array([0.0, 1e-8, 1.0, 800.0, -800.0])
    got = kernels.log_cosh(x)
    assert np.all(np.isfinite(got))
    assert got[2] == pytest.approx(math.log(math.cosh(1.0)), rel=1e-15)
    assert got[3] == pytest.approx(800.0 - math.log(2.0), rel=1e-15)


def test_zero_leg_gives_minus_infinity_sinh():
    legs = np.array([[0.0, 1.0]])
    counts = np.array([2])
    assert kernels.row_log_sinh_sum(legs, counts, 1.0)[0] == -np.inf
    assert kernels.row_log_sinh_sum_numpy(legs, counts, 1.0)[0] == -np.inf


def test_compensated_product_beats_naive():
    rng = np.random.default_rng(3)
    legs = rng.uniform(0.0, 0.05, (1, 400))
    counts = np.array([400])
    with np.errstate(all="ignore"):
        naive = np.prod(np.cos(legs[0]))
    exact = math.prod(math.cos(x) for x in legs[0])
    import mpmath as mp
    with mp.workdps(40):
        ref = float(mp.fprod(mp.cos(mp.mpf(float(x))) for x in legs[0]))
    got = kernels.row_cos_product(legs, counts, 1.0)[0]
    assert abs(got - ref) <= abs(naive - ref) + 1e-17
    assert abs(got - ref) <= abs(exact - ref) + 1e-17


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, GEODESIC_COMPASS_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from geodesic_compass import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@pytest.mark.parametrize("x", [1e-9, 1e-4, 0.3, 0.999, 1.0, 2.5])
def test_log_cosh_relative_accuracy(x):
    import mpmath as mp
    with mp.workdps(40):
        ref = float(mp.log(mp.cosh(mp.mpf(x))))
    assert kernels.log_cosh(np.array([x]))[0] == pytest.approx(ref, rel=4e-16)
    legs = np.array([[x]])
    assert kernels.row_log_cosh_sum_numba(legs, np.array([1]), 1.0)[0] == pytest.approx(ref, rel=4e-16)
