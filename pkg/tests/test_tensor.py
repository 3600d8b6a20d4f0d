import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from densecorr import tensor
from densecorr.exceptions import AxisError, ShapeError, SizeError


def test_zeros_small():
    z = tensor.zeros((1, 1, 2, 2))
    assert z.dtype == np.float64
    assert z.tolist() == [[[[0.0, 0.0], [0.0, 0.0]]]]


def test_zeros_empty_and_count():
    assert tensor.zeros((0, 3, 4, 4)).size == 0
    z = tensor.zeros((2, 2, 3, 3))
    assert z.size == 36 and not z.any()


def test_zeros_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        tensor.zeros((1, 2, 3))
    with pytest.raises(ShapeError):
        tensor.zeros((1, -1, 2, 2))
    with pytest.raises(SizeError):
        tensor.zeros((2**20, 2**20, 2**20, 2**20))


def test_elementwise_ops(rng):
    a = np.array([1.0, 2.0]).reshape(1, 1, 1, 2)
    b = np.array([3.0, 4.0]).reshape(1, 1, 1, 2)
    assert tensor.add(a, b).ravel().tolist() == [4.0, 6.0]
    x = rng.normal(size=(2, 3, 4, 5))
    assert not tensor.mul(x, tensor.zeros(x.shape)).any()
    assert not tensor.sub(x, x).any()


def test_elementwise_shape_mismatch():
    with pytest.raises(ShapeError):
        tensor.add(tensor.zeros((1, 1, 2, 2)), tensor.zeros((1, 1, 2, 3)))
    with pytest.raises(ValueError):
        tensor.elementwise("div", tensor.zeros((1, 1, 1, 1)), tensor.zeros((1, 1, 1, 1)))


def test_ops_do_not_mutate(rng):
    a = rng.normal(size=(1, 2, 3, 3))
    before = a.copy()
    tensor.add(a, a)
    tensor.reduce_sum(a, "width")
    np.testing.assert_array_equal(a, before)


def test_reduce_sum():
    a = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    assert tensor.reduce_sum(a).item() == 10.0
    assert tensor.reduce_sum(a, "width").reshape(-1).tolist() == [3.0, 7.0]
    assert tensor.reduce_sum(a, 3).shape == (1, 1, 2, 1)
    assert tensor.reduce_sum(tensor.zeros((0, 2, 2, 2))).item() == 0.0


@pytest.mark.parametrize("axes", [4, -1, "depth", (0, 7)])
def test_reduce_sum_bad_axis(axes):
    with pytest.raises(AxisError):
        tensor.reduce_sum(tensor.zeros((1, 1, 1, 1)), axes)


def test_reduce_sum_matches_scalar_loop(rng):
    a = rng.normal(size=(2, 3, 4, 5))
    total = 0.0
    for v in a.reshape(-1):
        total += v
    assert abs(tensor.reduce_sum(a).item() - total) < 1e-12


small = arrays(np.float64, (1, 2, 2, 3), elements=st.floats(-1, 1))


@settings(max_examples=50)
@given(small, small, small)
def test_add_commutative_associative(a, b, c):
    np.testing.assert_allclose(tensor.add(a, b), tensor.add(b, a), atol=1e-12)
    np.testing.assert_allclose(tensor.add(tensor.add(a, b), c), tensor.add(a, tensor.add(b, c)), atol=1e-12)


def test_cnt1_roundtrip(rng):
    a = rng.normal(size=(2, 3, 4, 5))
    data = tensor.to_bytes(a)
    assert data[:4] == b"CNT1"
    assert len(data) == 4 + 16 + 8 * a.size
    np.testing.assert_array_equal(tensor.from_bytes(data), a)


def test_cnt1_layout_is_little_endian_row_major():
    a = np.arange(6, dtype=np.float64).reshape(1, 1, 2, 3)
    data = tensor.to_bytes(a)
    assert np.frombuffer(data[4:20], "<u4").tolist() == [1, 1, 2, 3]
    assert np.frombuffer(data[20:], "<f8").tolist() == [0, 1, 2, 3, 4, 5]


def test_cnt1_rejects_bad_input():
    with pytest.raises(ShapeError):
        tensor.read_cnt1(io.BytesIO(b"XXXX" + bytes(16)))
    with pytest.raises(ShapeError):
        tensor.from_bytes(tensor.to_bytes(np.ones((1, 1, 2, 2)))[:-3])
