import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ..tensor import (WORD_BITS, BitTensor, as_float_tensor, conv_output_size,
                      pack, popcount, sliding_patches, unpack)


def test_popcount_words():
    words = np.array([0, 1, 0xff, 0xffffffffffffffff, 0x8000000000000001],
                     dtype=np.uint64)
    assert_array_equal(popcount(words), [0, 1, 8, 64, 2])


def test_pack_bit_order():
    b = pack([1., -1., 1., -1.])
    assert b.words.shape == (1, 1)
    assert int(b.words[0, 0]) == 5
    assert b.n_padding_bits == WORD_BITS - 4


@pytest.mark.parametrize('shape,row_ndim', [((3,), 0), ((64,), 0),
                                            ((2, 65), 1), ((2, 3, 5, 5), 1),
                                            ((4, 2, 3, 3), 2)])
def test_pack_unpack(rng, shape, row_ndim):
    t = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    b = pack(t, row_ndim=row_ndim)
    assert b.shape == shape
    assert b.words.shape == (b.n_rows, -(-b.row_length // WORD_BITS))
    assert_array_equal(unpack(b), t)


def test_padding_bits_are_zero():
    b = pack(np.ones((3, 70)), row_ndim=1)
    assert np.all(b.words[:, -1] >> np.uint64(6) == 0)
    with pytest.raises(ValueError):
        BitTensor((70,), np.full((1, 2), np.uint64(0xffffffffffffffff)))


def test_pack_rejects_non_binary():
    with pytest.raises(ValueError, match='unbinarized'):
        pack([1.0, 0.5, -1.0])
    with pytest.raises(ValueError):
        pack([1.0, 0.0])
    with pytest.raises(ValueError):
        pack(np.zeros((0,)))


def test_bittensor_words_are_read_only():
    b = pack([1., 1.])
    with pytest.raises(ValueError):
        b.words[0, 0] = 0


def test_bittensor_equality():
    t = np.array([[1., -1.], [-1., -1.]])
    assert pack(t, 1) == pack(t.copy(), 1)
    assert pack(t, 1) != pack(t, 0)


def test_as_float_tensor_rejects_nan():
    with pytest.raises(ValueError):
        as_float_tensor([1.0, np.nan])
    with pytest.raises(ValueError):
        as_float_tensor([np.inf])


def test_conv_output_size():
    assert conv_output_size(32, 3, 1, 1) == 32
    assert conv_output_size(32, 3, 2, 1) == 16
    assert conv_output_size(224, 3, 2, 1) == 112
    assert conv_output_size(3, 3, 1, 0) == 1
    with pytest.raises(ValueError):
        conv_output_size(2, 3, 1, 0)
    with pytest.raises(ValueError):
        conv_output_size(8, 3, 0, 1)


def test_sliding_patches_fill(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    cols = sliding_patches(x, 3, 3, stride=1, padding=1, fill=-1.0)
    assert cols.shape == (1, 4, 4, 2, 3, 3)
    assert cols[0, 0, 0, 0, 0, 0] == -1.0
    assert_array_equal(cols[0, 1, 1, :, :, :], x[0, :, 0:3, 0:3])
    strided = sliding_patches(x, 3, 3, stride=2, padding=1)
    assert strided.shape == (1, 2, 2, 2, 3, 3)
    assert_array_equal(strided[0, 1, 1], x[0, :, 1:4, 1:4])


def test_pack_unpack_random_shapes(rng):
    for _ in range(1000):
        ndim = int(rng.integers(1, 5))
        shape = tuple(int(s) for s in rng.integers(1, 7, ndim))
        if rng.random() < 0.1:
            shape = shape[:-1] + (int(rng.integers(60, 140)),)
        row_ndim = int(rng.integers(0, ndim))
        t = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        b = pack(t, row_ndim=row_ndim)
        assert_array_equal(unpack(b), t)
        tail = b.row_length % WORD_BITS
        if tail:
            assert np.all(b.words[:, -1] >> np.uint64(tail) == 0)
