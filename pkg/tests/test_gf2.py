import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dynchecks import gf2


def bitmats(rows, cols):
    return arrays(np.uint8, (rows, cols), elements=st.integers(0, 1))


def test_identity_inverse():
    eye = np.eye(5, dtype=np.uint8)
    assert np.array_equal(gf2.inv(eye), eye)


def test_singular_raises():
    m = np.array([[1, 1], [1, 1]], dtype=np.uint8)
    assert not gf2.is_invertible(m)
    with pytest.raises(np.linalg.LinAlgError):
        gf2.inv(m)


@settings(max_examples=60, deadline=None)
@given(bitmats(6, 6))
def test_inverse_roundtrip(m):
    if gf2.is_invertible(m):
        assert np.array_equal(gf2.matmul(m, gf2.inv(m)), np.eye(6, dtype=np.uint8))
    else:
        assert gf2.rank(m) < 6


@settings(max_examples=60, deadline=None)
@given(bitmats(5, 8))
def test_rank_matches_row_reduction(m):
    red, piv = gf2.row_reduce(m)
    assert gf2.rank(m) == len(piv) <= 5
    assert gf2.same_row_space(m, red)


@settings(max_examples=40, deadline=None)
@given(bitmats(4, 7), bitmats(3, 4))
def test_solve_left_finds_combination(a, x):
    b = gf2.matmul(x, a)
    sol = gf2.solve_left(a, b)
    assert sol is not None
    assert np.array_equal(gf2.matmul(sol, a), b)


@settings(max_examples=40, deadline=None)
@given(bitmats(6, 4))
def test_left_kernel_annihilates(a):
    k = gf2.left_kernel(a)
    assert k.shape[0] == 6 - gf2.rank(a)
    if k.size:
        assert not gf2.matmul(k, a).any()


def test_rank_against_real_determinants_for_small_cases():
    # brute force over all 3x3 binary matrices: invertible iff the odd determinant
    count = 0
    for bits in range(1 << 9):
        m = np.array([(bits >> i) & 1 for i in range(9)], dtype=np.uint8).reshape(3, 3)
        odd = int(round(np.linalg.det(m.astype(float)))) % 2 == 1
        assert gf2.is_invertible(m) == odd
        count += odd
    assert count == 168  # |GL(3, 2)|
