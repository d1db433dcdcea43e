# -*- coding: utf-8 -*-
"""
Real-valued supporting layers: batch normalization, 2x2 average pooling,
global average pooling, fully-connected, dense (grouped) convolution and
softmax.

Every layer is a pair of functions. ``*_forward`` returns the output and a
cache; ``*_backward`` takes the upstream gradient and that cache.
"""

import warnings

import numpy as np
from astropy.utils.exceptions import AstropyUserWarning
from scipy import special

from .config import conf
from .opscount import record_macs
from .tensor import sliding_patches

__all__ = ['BatchNormParams', 'batchnorm_forward', 'batchnorm_backward',
           'avgpool2x2', 'avgpool2x2_backward', 'global_avgpool',
           'global_avgpool_backward', 'fc_forward', 'fc_backward',
           'real_conv2d', 'real_conv2d_backward', 'softmax', 'log_softmax']


class BatchNormParams(object):
    """
    Per-channel batch normalization state.

    Parameters
    ----------
    channels : int
    momentum : float, optional
        Defaults to ``conf.bn_momentum``.
    epsilon : float, optional
        Defaults to ``conf.bn_epsilon``.
    """

    def __init__(self, channels, momentum=None, epsilon=None):
        self.gamma_bn = np.ones(channels)
        self.beta_bn = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = conf.bn_momentum if momentum is None else momentum
        self.epsilon = conf.bn_epsilon if epsilon is None else epsilon
        if not 0 < self.momentum < 1:
            raise ValueError('momentum must lie in (0, 1)')
        if not self.epsilon > 0:
            raise ValueError('epsilon must be positive')

    @property
    def channels(self):
        return self.gamma_bn.size

    def copy(self):
        new = BatchNormParams(self.channels, self.momentum, self.epsilon)
        for name in ('gamma_bn', 'beta_bn', 'running_mean', 'running_var'):
            setattr(new, name, getattr(self, name).copy())
        return new


def _bcast(v, ndim):
    return v.reshape((1, -1) + (1,) * (ndim - 2))


def batchnorm_forward(x, p, training):
    """
    Batch normalization over every axis but the channel axis (1).

    In training mode the batch statistics normalize the input and update
    the running statistics of ``p`` in place; in eval mode the running
    statistics are used.

    Returns
    -------
    out : array
    cache : tuple
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[1] != p.channels:
        raise ValueError('batchnorm: input shape {0} does not have {1} '
                         'channels'.format(x.shape, p.channels))
    axes = (0,) + tuple(range(2, x.ndim))

    if training:
        if x.shape[0] < 2:
            raise ValueError('batchnorm needs a batch of at least 2 in '
                             'training mode')
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        m = x.size // p.channels
        p.running_mean[...] = ((1 - p.momentum) * p.running_mean +
                               p.momentum * mean)
        p.running_var[...] = ((1 - p.momentum) * p.running_var +
                              p.momentum * var * m / max(m - 1, 1))
    else:
        mean = p.running_mean
        var = p.running_var

    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    x_hat = (x - _bcast(mean, x.ndim)) * _bcast(inv_std, x.ndim)
    out = _bcast(p.gamma_bn, x.ndim) * x_hat + _bcast(p.beta_bn, x.ndim)
    return out, (x_hat, inv_std, p.gamma_bn.copy(), training)


def batchnorm_backward(dout, cache):
    """
    Returns
    -------
    dx, dgamma_bn, dbeta_bn
    """
    x_hat, inv_std, gamma_bn, training = cache
    ndim = dout.ndim
    axes = (0,) + tuple(range(2, ndim))
    dgamma = (dout * x_hat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)

    scale = _bcast(gamma_bn * inv_std, ndim)
    if not training:
        return dout * scale, dgamma, dbeta

    m = dout.size // gamma_bn.size
    dx = scale / m * (m * dout - _bcast(dbeta, ndim) -
                      x_hat * _bcast(dgamma, ndim))
    return dx, dgamma, dbeta


def avgpool2x2(x):
    """
    2x2 average pooling with stride 2.

    Odd spatial sizes are first padded by replicating the last row/column.
    """
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        warnings.warn('avgpool2x2: odd spatial size {0}x{1}, replicating '
                      'the last row/column'.format(h, w), AstropyUserWarning)
        x = np.pad(x, ((0, 0), (0, 0), (0, h % 2), (0, w % 2)), mode='edge')
        h, w = x.shape[2:]
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2x2_backward(dout, input_shape):
    """
    Gradient of `avgpool2x2` with respect to an input of ``input_shape``.
    """
    n, c, h, w = input_shape
    grad = np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) / 4.0
    if h % 2:
        grad[:, :, h - 1] += grad[:, :, h]
    if w % 2:
        grad[:, :, :, w - 1] += grad[:, :, :, w]
    return np.ascontiguousarray(grad[:, :, :h, :w])


def global_avgpool(x):
    """Mean over the spatial axes: NCHW -> NC."""
    return np.asarray(x, dtype=np.float64).mean(axis=(2, 3))


def global_avgpool_backward(dout, input_shape):
    h, w = input_shape[2:]
    return np.broadcast_to(dout[:, :, None, None] / (h * w),
                           input_shape).copy()


def fc_forward(x, weight, bias):
    """
    Fully-connected layer ``x @ weight.T + bias``.

    Parameters
    ----------
    x : 2d array (N, in)
    weight : 2d array (out, in)
    bias : 1d array (out,)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError('fc: input shape {0} does not match weight shape '
                         '{1}'.format(x.shape, weight.shape))
    record_macs('flops', x.shape[0] * weight.size)
    return x @ weight.T + bias


def fc_backward(dout, x, weight):
    """
    Returns
    -------
    dx, dweight, dbias
    """
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def real_conv2d(x, weight, stride=1, padding=0, groups=1, pad_value=0.0,
                mac_kind='flops'):
    """
    Dense 2-d convolution (cross-correlation), optionally grouped.

    Parameters
    ----------
    x : array, NCHW
    weight : array, OIHW with ``I = C / groups``
    stride, padding : int
    groups : int
        Must divide both channel counts.
    pad_value : float
        Value of the padded border (-1 on the binary path).
    mac_kind : {'flops', 'bops'}
        Counter charged for the multiply-accumulates. The float rendition
        of a 1-bit convolution charges 'bops'.

    Returns
    -------
    out : array, NCHW
    cache : dict
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError('real_conv2d expects NCHW input and OIHW weights')
    n, c = x.shape[:2]
    o, ci, kh, kw = weight.shape
    if groups < 1 or c % groups or o % groups:
        raise ValueError('groups={0} must divide input ({1}) and output ({2}) '
                         'channels'.format(groups, c, o))
    if ci * groups != c:
        raise ValueError('input has {0} channels, weights expect {1}'.format(
            c, ci * groups))

    patches = sliding_patches(x, kh, kw, stride, padding, fill=pad_value)
    oh, ow = patches.shape[1:3]
    cols = patches.reshape(n * oh * ow, groups, ci * kh * kw)
    w_g = weight.reshape(groups, o // groups, ci * kh * kw)

    out = np.einsum('pgk,gok->pgo', cols, w_g, optimize=True)
    record_macs(mac_kind, cols.shape[0] * weight.size)
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)

    cache = dict(cols=cols, weight=weight, input_shape=x.shape,
                 stride=stride, padding=padding, groups=groups)
    return np.ascontiguousarray(out), cache


def real_conv2d_backward(dout, cache):
    """
    Returns
    -------
    dx : array, NCHW
    dweight : array, OIHW (gradient of ``cache['weight']``)
    """
    cols, weight = cache['cols'], cache['weight']
    n, c, h, w = cache['input_shape']
    stride, padding = cache['stride'], cache['padding']
    groups = cache['groups']
    o, ci, kh, kw = weight.shape
    oh, ow = dout.shape[2:]

    d = dout.transpose(0, 2, 3, 1).reshape(-1, groups, o // groups)
    w_g = weight.reshape(groups, o // groups, ci * kh * kw)
    dweight = np.einsum('pgo,pgk->gok', d, cols, optimize=True)
    dcols = np.einsum('pgo,gok->pgk', d, w_g, optimize=True)

    dcols = dcols.reshape(n, oh, ow, c, kh, kw)
    padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        i_max = i + stride * oh
        for j in range(kw):
            j_max = j + stride * ow
            padded[:, :, i:i_max:stride, j:j_max:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = padded[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(dx), dweight.reshape(weight.shape)


def softmax(logits):
    """
    Row-wise softmax of a (N, K) array of logits.
    """
    return special.softmax(np.asarray(logits, dtype=np.float64), axis=1)


def log_softmax(logits):
    return special.log_softmax(np.asarray(logits, dtype=np.float64), axis=1)
