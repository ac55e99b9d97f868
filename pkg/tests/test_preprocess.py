import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maneuverseg.errors import WindowTooLarge
from maneuverseg.preprocess import default_window_len, moving_average, normalize, prepare_gyro

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, allow_subnormal=False)


def test_moving_average_examples():
    assert moving_average([1, 1, 1, 1], 3).tolist() == [1, 1, 1, 1]
    np.testing.assert_allclose(moving_average([0, 3, 0], 3), [1.5, 1.0, 1.5], atol=1e-15)
    x = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(moving_average(x, 1), x)
    with pytest.raises(WindowTooLarge):
        moving_average([1, 2], 3)


def test_moving_average_matches_direct_means():
    rng = np.random.default_rng(0)
    x = rng.normal(size=57)
    for w in (2, 5, 8, 15):
        left = w // 2
        right = w - left - 1
        direct = [x[max(0, i - left) : i + right + 1].mean() for i in range(x.size)]
        np.testing.assert_allclose(moving_average(x, w), direct, atol=1e-12)


def test_normalize_examples():
    out, p = normalize([1.0, 2.0, 3.0])
    np.testing.assert_allclose(out, [-0.5, 0.0, 0.5], atol=1e-15)
    assert (p.mean, p.min, p.max) == (2.0, 1.0, 3.0)
    out, p = normalize([5.0, 5.0, 5.0])
    assert out.tolist() == [0.0, 0.0, 0.0] and p.range == 0.0


@given(arrays(np.float64, st.integers(1, 200), elements=finite))
def test_normalize_properties(x):
    # ranges near the subnormal limit lose precision in the division
    assume(np.ptp(x) == 0 or np.ptp(x) > 1e-200)
    out, _ = normalize(x)
    assert abs(out.mean()) < 1e-12
    assert np.all(np.abs(out) <= 1.0 + 1e-12)
    again, _ = normalize(out)
    # the affine map preserves order up to rounding at the scale of the range
    tol = 1e-12 * np.ptp(x)
    assert x[np.argmax(again)] >= x.max() - tol
    assert x[np.argmin(again)] <= x.min() + tol


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(1, 100), elements=finite), st.integers(1, 20))
def test_moving_average_never_amplifies(x, w):
    w = min(w, x.size)
    assert np.max(np.abs(moving_average(x, w))) <= np.max(np.abs(x)) * (1 + 1e-12) + 1e-9


def test_prepare_gyro_defaults():
    assert default_window_len(30.0) == 15
    g = np.sin(np.linspace(0, 6, 300))
    smoothed, normed, params = prepare_gyro(g, 30.0)
    np.testing.assert_allclose(smoothed, moving_average(g, 15))
    np.testing.assert_allclose(normed, params.apply(smoothed))
