import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fedstop import vecmath
from fedstop.errors import ArgumentError, DimensionError, NumericError


@pytest.mark.parametrize("a, b, expected", [
    ([1, 2], [1, 2], [0, 0]),
    ([3, 0], [1, -1], [2, 1]),
    ([0.5], [0.25], [0.25]),
])
def test_sub(a, b, expected):
    np.testing.assert_array_equal(vecmath.sub(np.array(a, float), np.array(b, float)), expected)


@pytest.mark.parametrize("a, expected", [([0, 0, 0], 0.0), ([3, 4], 5.0), ([1, 1, 1, 1], 2.0)])
def test_l2_norm(a, expected):
    assert vecmath.l2_norm(np.array(a, float)) == expected


@pytest.mark.parametrize("alpha, x, y, expected", [
    (0, [5], [2], [2]),
    (1, [1, 1], [0, 0], [1, 1]),
    (-0.5, [2, 4], [1, 1], [0, -1]),
])
def test_axpy(alpha, x, y, expected):
    np.testing.assert_array_equal(vecmath.axpy(alpha, np.array(x, float), np.array(y, float)), expected)


@pytest.mark.parametrize("vs, expected", [
    ([[2], [4]], [3]),
    ([[1, 1]], [1, 1]),
    ([[0, 2], [2, 0], [1, 1]], [1, 1]),
])
def test_mean(vs, expected):
    np.testing.assert_array_equal(vecmath.mean([np.array(v, float) for v in vs]), expected)


def test_errors():
    with pytest.raises(DimensionError):
        vecmath.sub(np.zeros(2), np.zeros(3))
    with pytest.raises(DimensionError):
        vecmath.axpy(1.0, np.zeros(2), np.zeros(3))
    with pytest.raises(DimensionError):
        vecmath.mean([np.zeros(2), np.zeros(3)])
    with pytest.raises(ArgumentError):
        vecmath.mean([])
    with pytest.raises(NumericError):
        vecmath.l2_norm(np.array([1.0, np.nan]))
    with pytest.raises(NumericError):
        vecmath.l2_norm(np.array([np.inf]))


def test_inputs_not_mutated():
    a = np.array([1.0, 2.0])
    b = np.array([0.5, 0.5])
    vecmath.sub(a, b)
    vecmath.axpy(2.0, a, b)
    vecmath.mean([a, b])
    np.testing.assert_array_equal(a, [1.0, 2.0])
    np.testing.assert_array_equal(b, [0.5, 0.5])


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
vec = arrays(np.float64, 5, elements=finite)


@given(vec)
def test_norm_of_self_difference_is_zero(a):
    assert vecmath.l2_norm(vecmath.sub(a, a)) == 0.0


@given(vec, vec, vec)
def test_triangle_inequality(a, b, c):
    lhs = vecmath.l2_norm(vecmath.sub(a, c))
    rhs = vecmath.l2_norm(vecmath.sub(a, b)) + vecmath.l2_norm(vecmath.sub(b, c))
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@given(vec, st.integers(1, 12))
def test_mean_of_copies_is_exact(v, k):
    out = vecmath.mean([v.copy() for _ in range(k)])
    # exact equality; the sign of zero may differ
    assert np.array_equal(out, v)
