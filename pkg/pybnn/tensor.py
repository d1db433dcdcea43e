# -*- coding: utf-8 -*-
"""
Dense float tensors and bit-packed binary tensors.

Float tensors are plain `~numpy.ndarray` objects of dtype float64, laid out
row-major in NCHW order for feature maps and OIHW order for convolution
weights. Binary tensors are `BitTensor` objects holding one bit per element
in 64-bit words: bit value 1 encodes +1 and bit value 0 encodes -1, so the
XNOR of two encoded words marks the positions where the signs agree.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ['WORD_BITS', 'BitTensor', 'as_float_tensor', 'pack', 'unpack',
           'popcount', 'conv_output_size', 'sliding_patches']

WORD_BITS = 64

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0f0f0f0f0f0f0f0f)
_H01 = np.uint64(0x0101010101010101)


def _popcount_swar(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return ((x * _H01) >> np.uint64(56)).astype(np.uint8)


def popcount(words):
    """
    Count the set bits of every 64-bit word.

    Parameters
    ----------
    words : array of uint64

    Returns
    -------
    counts : array of uint8, same shape as ``words``
    """
    words = np.asarray(words, dtype=np.uint64)
    if hasattr(np, 'bitwise_count'):
        return np.bitwise_count(words)
    with np.errstate(over='ignore'):
        return _popcount_swar(words)


def as_float_tensor(x, name='tensor'):
    """
    Return ``x`` as a float64 array, rejecting NaN and Inf.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError('{0} contains non-finite values'.format(name))
    return x


class BitTensor(object):
    """
    A bit-packed tensor of +1/-1 values.

    The elements are split into rows: the leading ``row_ndim`` axes index
    rows and the remaining axes are flattened (row-major) into the packed
    bit stream of each row. Every row starts on a fresh word, and the
    unused high bits of a row's final word are always 0.

    Parameters
    ----------
    shape : tuple of int
        Logical shape of the tensor.
    words : 2d array of uint64
        Packed words, shaped ``(n_rows, words_per_row)``.
    row_ndim : int, optional
        Number of leading axes that index rows. 0 (the default) packs the
        whole tensor as one row.
    """

    def __init__(self, shape, words, row_ndim=0):
        self.shape = tuple(int(s) for s in shape)
        if not 0 <= row_ndim <= len(self.shape):
            raise ValueError('row_ndim={0} is invalid for shape {1}'.format(
                row_ndim, self.shape))
        self.row_ndim = int(row_ndim)

        words = np.array(words, dtype=np.uint64, copy=True)
        expected = (self.n_rows, self.words_per_row)
        if words.shape != expected:
            raise ValueError('word array has shape {0}, expected {1}'.format(
                words.shape, expected))

        used = self.row_length % WORD_BITS
        if used and words.size:
            pad_mask = ~np.uint64((1 << used) - 1)
            if np.any(words[:, -1] & pad_mask):
                raise ValueError('padding bits of a BitTensor must be 0')

        words.setflags(write=False)
        self.words = words

    @classmethod
    def from_bool(cls, bits, row_ndim=0):
        """
        Pack a boolean array (True = +1, False = -1).
        """
        bits = np.asarray(bits, dtype=bool)
        shape = bits.shape
        n_rows = int(np.prod(shape[:row_ndim], dtype=np.int64))
        row_length = int(np.prod(shape[row_ndim:], dtype=np.int64))
        rows = bits.reshape(n_rows, row_length)
        words_per_row = -(-row_length // WORD_BITS)

        padded = np.zeros((n_rows, words_per_row * WORD_BITS), dtype=bool)
        padded[:, :row_length] = rows
        packed = np.packbits(padded, axis=1, bitorder='little')
        words = np.ascontiguousarray(packed).view('<u8').astype(np.uint64)
        return cls(shape, words, row_ndim=row_ndim)

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def n_rows(self):
        return int(np.prod(self.shape[:self.row_ndim], dtype=np.int64))

    @property
    def row_length(self):
        return int(np.prod(self.shape[self.row_ndim:], dtype=np.int64))

    @property
    def words_per_row(self):
        return -(-self.row_length // WORD_BITS)

    @property
    def n_padding_bits(self):
        """Padding bits at the end of every row."""
        return self.words_per_row * WORD_BITS - self.row_length

    def to_bool(self):
        """
        Unpack to a boolean array of ``self.shape`` (True = +1).
        """
        raw = np.ascontiguousarray(self.words.astype('<u8')).view(np.uint8)
        raw = raw.reshape(self.n_rows, self.words_per_row * 8)
        bits = np.unpackbits(raw, axis=1, count=self.row_length,
                             bitorder='little')
        return bits.astype(bool).reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, BitTensor):
            return NotImplemented
        return (self.shape == other.shape and
                self.row_ndim == other.row_ndim and
                np.array_equal(self.words, other.words))

    __hash__ = None

    def __repr__(self):
        return '<BitTensor shape={0} row_ndim={1} words={2}>'.format(
            self.shape, self.row_ndim, self.words.shape)


def pack(t, row_ndim=0):
    """
    Pack a tensor of +1/-1 values into a `BitTensor`.

    Parameters
    ----------
    t : array-like
        Every element must be exactly -1.0 or +1.0.
    row_ndim : int, optional
        Number of leading axes packed as separate rows (default 0).

    Returns
    -------
    BitTensor

    Examples
    --------
    >>> b = pack([1., -1., 1., -1.])
    >>> int(b.words[0, 0])
    5
    """
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise ValueError('cannot pack a zero-size tensor')
    bad = (t != 1.0) & (t != -1.0)
    if np.any(bad):
        raise ValueError(
            'pack expects only +1/-1 values; found {0} other value(s), '
            'e.g. {1!r}. An unbinarized tensor reached the binary '
            'path.'.format(int(bad.sum()), float(t[bad].flat[0])))
    return BitTensor.from_bool(t > 0, row_ndim=row_ndim)


def unpack(b):
    """
    Expand a `BitTensor` to a float64 tensor of +1.0/-1.0.
    """
    return np.where(b.to_bool(), 1.0, -1.0)


def conv_output_size(size, kernel, stride, padding):
    """
    Output length of a convolution along one spatial axis.

    Raises
    ------
    ValueError
        If the stride is not positive, the padding negative, or the
        output would be empty.
    """
    if stride < 1:
        raise ValueError('stride must be positive, got {0}'.format(stride))
    if padding < 0:
        raise ValueError('padding must be non-negative, got {0}'.format(
            padding))
    out = (size + 2 * padding - kernel) // stride + 1
    if size + 2 * padding < kernel or out < 1:
        raise ValueError(
            'kernel {0} with stride {1} and padding {2} does not fit an '
            'input of size {3}'.format(kernel, stride, padding, size))
    return out


def sliding_patches(x, kh, kw, stride=1, padding=0, fill=0):
    """
    Gather the receptive fields of a 2-d convolution.

    Parameters
    ----------
    x : 4d array, NCHW
    kh, kw : int
        Kernel height and width.
    stride, padding : int
    fill : scalar
        Value of the padded border.

    Returns
    -------
    patches : 6d array view, shaped (N, H', W', C, kh, kw)
    """
    if x.ndim != 4:
        raise ValueError('expected an NCHW tensor, got shape {0}'.format(
            x.shape))
    out_h = conv_output_size(x.shape[2], kh, stride, padding)
    out_w = conv_output_size(x.shape[3], kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   mode='constant', constant_values=fill)
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    return win.transpose(0, 2, 3, 1, 4, 5)
