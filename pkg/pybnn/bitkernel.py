# -*- coding: utf-8 -*-
"""
1-bit matrix multiply and convolution through XNOR and popcount.

For two +1/-1 vectors of length n packed with the `~pybnn.tensor` encoding
(1 = +1, 0 = -1), XNOR sets a bit exactly where the signs agree, so

    dot(a, b) = agree - (n - agree) = 2 * popcount(XNOR(a, b)) - n.

Binary weights carry a per-output-channel scale, the mean absolute value of
the latent real weights of that filter. Activations carry no scale.
"""

import numpy as np

from .config import conf
from .opscount import record_macs
from .tensor import (BitTensor, as_float_tensor, conv_output_size, pack,
                     popcount, sliding_patches)

__all__ = ['BinaryConvParams', 'compute_scale', 'binarize_weights',
           'xnor_popcount_dot', 'xnor_popcount_matmul', 'im2col',
           'binary_conv2d']


def compute_scale(w_r):
    """
    Per-output-channel weight scale: ``sum(|w_r[o]|) / n`` with
    ``n = in_channels * kH * kW``.

    Parameters
    ----------
    w_r : array, OIHW

    Returns
    -------
    scale : 1d array of length O
    """
    w_r = as_float_tensor(w_r, 'weights')
    n = int(np.prod(w_r.shape[1:]))
    return np.abs(w_r).reshape(w_r.shape[0], -1).sum(axis=1) / n


def binarize_weights(w_r):
    """
    Sign of the latent weights, with exact zeros mapped to -1.
    """
    return np.where(np.asarray(w_r) > 0, 1.0, -1.0)


class BinaryConvParams(object):
    """
    Weights of a 1-bit convolution.

    Parameters
    ----------
    real_weights : array, OIHW
        The latent real-valued weights kept for training.

    Attributes
    ----------
    packed_weights : `~pybnn.tensor.BitTensor`
        Signs of ``real_weights``, one packed row per output filter.
    scale : 1d array
        Per-output-channel scaling factor, see `compute_scale`.
    """

    def __init__(self, real_weights):
        real_weights = as_float_tensor(real_weights, 'weights')
        if real_weights.ndim != 4:
            raise ValueError('binary conv weights must be OIHW, got shape '
                             '{0}'.format(real_weights.shape))
        self.real_weights = real_weights.copy()
        self.packed_weights = pack(binarize_weights(real_weights), row_ndim=1)
        self.scale = compute_scale(real_weights)

    @property
    def out_channels(self):
        return self.real_weights.shape[0]

    @property
    def in_channels(self):
        return self.real_weights.shape[1]

    @property
    def kernel_size(self):
        return self.real_weights.shape[2:]


def xnor_popcount_dot(a, b):
    """
    +1/-1 dot product of two packed vectors.

    Parameters
    ----------
    a, b : `~pybnn.tensor.BitTensor`
        Single-row tensors with the same number of elements.

    Returns
    -------
    int

    Examples
    --------
    >>> from pybnn.tensor import pack
    >>> xnor_popcount_dot(pack([1., -1., 1.]), pack([1., 1., -1.]))
    -1
    """
    if a.n_rows != 1 or b.n_rows != 1:
        raise ValueError('xnor_popcount_dot expects single-row BitTensors')
    if a.row_length != b.row_length:
        raise ValueError('length mismatch: {0} vs {1}'.format(
            a.row_length, b.row_length))
    agree = int(popcount(~(a.words ^ b.words)).sum(dtype=np.int64))
    # XNOR of two zero padding bits is 1
    agree -= a.n_padding_bits
    return 2 * agree - a.row_length


def xnor_popcount_matmul(a, b):
    """
    All-pairs +1/-1 dot products between the rows of two packed matrices.

    Parameters
    ----------
    a : `~pybnn.tensor.BitTensor`
        P packed rows of length n.
    b : `~pybnn.tensor.BitTensor`
        O packed rows of length n.

    Returns
    -------
    out : 2d int32 array, shaped (P, O)
    """
    if a.row_length != b.row_length:
        raise ValueError('row length mismatch: {0} vs {1}'.format(
            a.row_length, b.row_length))
    n = a.row_length
    pad = a.n_padding_bits
    wa, wb = a.words, b.words
    n_out, n_words = wb.shape

    out = np.empty((wa.shape[0], n_out), dtype=np.int32)
    chunk = max(1, int(conf.kernel_chunk_words) // max(1, n_out * n_words))
    for start in range(0, wa.shape[0], chunk):
        stop = start + chunk
        agree = popcount(~(wa[start:stop, None, :] ^ wb[None, :, :]))
        agree = agree.sum(axis=2, dtype=np.int32) - pad
        out[start:stop] = 2 * agree - n
    return out


def im2col(x, kh, kw, stride=1, padding=0):
    """
    Bit-packed receptive fields of a 1-bit convolution.

    Parameters
    ----------
    x : `~pybnn.tensor.BitTensor`, NCHW
    kh, kw, stride, padding : int
        Padded border elements are -1.

    Returns
    -------
    `~pybnn.tensor.BitTensor`
        Shape ``(N * H' * W', C * kh * kw)``, one packed row per output
        position (ordered n, h', w'), columns ordered (c, i, j) to match
        OIHW filters.
    """
    if x.ndim != 4:
        raise ValueError('im2col expects an NCHW BitTensor, got shape '
                         '{0}'.format(x.shape))
    cols = sliding_patches(x.to_bool(), kh, kw, stride, padding, fill=False)
    n, oh, ow, c = cols.shape[:4]
    return BitTensor.from_bool(cols.reshape(n * oh * ow, c * kh * kw),
                               row_ndim=1)


def binary_conv2d(x, params, stride=1, padding=0):
    """
    1-bit 2-d convolution (cross-correlation) through XNOR and popcount.

    Parameters
    ----------
    x : `~pybnn.tensor.BitTensor`, NCHW
        Binary input activations.
    params : `BinaryConvParams`
    stride : int, optional
    padding : int, optional
        Border width, filled with -1.

    Returns
    -------
    out : 4d float64 array, NCHW
        ``out[:, o] = scale[o] * (integer correlation of x with the signs
        of filter o)``.
    """
    if x.ndim != 4:
        raise ValueError('binary_conv2d expects an NCHW BitTensor')
    n, c, h, w = x.shape
    if c != params.in_channels:
        raise ValueError('input has {0} channels, weights expect {1}'.format(
            c, params.in_channels))
    kh, kw = params.kernel_size
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)

    cols = im2col(x, kh, kw, stride, padding)
    acc = xnor_popcount_matmul(cols, params.packed_weights)
    record_macs('bops', acc.size * cols.row_length)

    out = acc.astype(np.float64) * params.scale
    return np.ascontiguousarray(
        out.reshape(n, oh, ow, params.out_channels).transpose(0, 3, 1, 2))
