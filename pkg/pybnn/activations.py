# -*- coding: utf-8 -*-
"""
Sign, RSign, PReLU and RPReLU, forward and backward.

RSign binarizes against a learnable per-channel threshold alpha::

    h(x) = +1 if x > alpha else -1

RPReLU shifts the input by -gamma, folds the negative side with slope
beta, then shifts the output by zeta::

    f(x) = x - gamma + zeta            if x > gamma
    f(x) = beta * (x - gamma) + zeta   if x <= gamma

Plain Sign and PReLU are the special cases alpha = 0 and gamma = zeta = 0.
Binarization is differentiated with a straight-through surrogate: the
piecewise-polynomial ``approx_sign`` for activations and a clipped identity
for weights.
"""

import numpy as np

from .bitkernel import binarize_weights, compute_scale
from .config import conf
from .tensor import pack

__all__ = ['RSignParams', 'RPReLUParams', 'sign', 'rsign', 'rsign_forward',
           'rsign_backward', 'approx_sign', 'approx_sign_grad',
           'rsign_surrogate',
           'rprelu_forward', 'rprelu_backward', 'weight_surrogate',
           'binarize_latent_weights', 'weight_binarize_backward']


def _per_channel(v, ndim):
    return np.asarray(v, dtype=np.float64).reshape((1, -1) + (1,) * (ndim - 2))


def _reduce_axes(ndim):
    return (0,) + tuple(range(2, ndim))


def _check_channels(x, channels, what):
    if x.ndim < 2 or x.shape[1] != channels:
        raise ValueError('{0}: input shape {1} does not have {2} '
                         'channels'.format(what, x.shape, channels))


class RSignParams(object):
    """
    Learnable thresholds of RSign.

    Parameters
    ----------
    alpha : 1d array
        One threshold per channel.
    """

    def __init__(self, alpha):
        alpha = np.array(alpha, dtype=np.float64).ravel()
        if not np.all(np.isfinite(alpha)):
            raise ValueError('alpha must be finite')
        self.alpha = alpha

    @classmethod
    def init(cls, channels):
        """Zero thresholds, i.e. plain Sign."""
        return cls(np.zeros(channels))

    @property
    def channels(self):
        return self.alpha.size


class RPReLUParams(object):
    """
    Learnable coefficients of RPReLU.

    Parameters
    ----------
    beta : 1d array
        Negative-side slope per channel (may be negative).
    gamma : 1d array
        Input shift per channel.
    zeta : 1d array
        Output shift per channel.
    """

    def __init__(self, beta, gamma, zeta):
        self.beta = np.array(beta, dtype=np.float64).ravel()
        self.gamma = np.array(gamma, dtype=np.float64).ravel()
        self.zeta = np.array(zeta, dtype=np.float64).ravel()
        if not (self.beta.size == self.gamma.size == self.zeta.size):
            raise ValueError('beta, gamma and zeta must share the channel '
                             'count')
        for v in (self.beta, self.gamma, self.zeta):
            if not np.all(np.isfinite(v)):
                raise ValueError('RPReLU coefficients must be finite')

    @classmethod
    def init(cls, channels, slope=None):
        """PReLU with slope ``conf.prelu_init_slope`` and no shifts."""
        if slope is None:
            slope = conf.prelu_init_slope
        return cls(np.full(channels, float(slope)), np.zeros(channels),
                   np.zeros(channels))

    @property
    def channels(self):
        return self.beta.size


def sign(x):
    """+1 where x > 0, -1 elsewhere."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


def rsign(x, alpha):
    """
    RSign as a float tensor of +1.0/-1.0.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > _per_channel(alpha, x.ndim), 1.0, -1.0)


def rsign_forward(x, p):
    """
    RSign of an NCHW tensor, bit-packed.

    Parameters
    ----------
    x : array, NCHW
    p : `RSignParams`

    Returns
    -------
    `~pybnn.tensor.BitTensor`
    """
    x = np.asarray(x, dtype=np.float64)
    _check_channels(x, p.channels, 'rsign_forward')
    return pack(rsign(x, p.alpha))


def approx_sign(u):
    """
    Piecewise-polynomial stand-in for sign(u), used as the differentiable
    surrogate of binarization.
    """
    u = np.asarray(u, dtype=np.float64)
    return np.select([u < -1, u < 0, u < 1],
                     [-1.0, 2 * u + u * u, 2 * u - u * u], 1.0)


def approx_sign_grad(u):
    """
    Derivative of `approx_sign`: 2 + 2u on [-1, 0), 2 - 2u on [0, 1),
    0 elsewhere.
    """
    u = np.asarray(u, dtype=np.float64)
    return np.select([u < -1, u < 0, u < 1], [0.0, 2 + 2 * u, 2 - 2 * u], 0.0)


def rsign_surrogate(x, alpha, alpha_ref):
    """
    Smooth stand-in for RSign whose partial derivatives are the ones
    `rsign_backward` returns.

    The input is compared with the frozen threshold ``alpha_ref`` through
    `approx_sign`, and ``alpha`` enters as a shift of the output, so the
    threshold partial is exactly -1. The value equals
    ``approx_sign(x - alpha)`` while ``alpha == alpha_ref``.

    Parameters
    ----------
    x : array, N C ...
    alpha, alpha_ref : 1d array
    """
    x = np.asarray(x, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    alpha_ref = np.asarray(alpha_ref, dtype=np.float64)
    return (approx_sign(x - _per_channel(alpha_ref, x.ndim)) -
            _per_channel(alpha - alpha_ref, x.ndim))


def rsign_backward(x, p, upstream):
    """
    Gradients of RSign.

    The input gradient is the upstream gradient times the surrogate slope
    at ``x - alpha``. The threshold gradient uses ``d h / d alpha = -1``
    directly, so it is minus the channel-wise sum of the upstream gradient
    whatever the surrogate does.

    Parameters
    ----------
    x : array, NCHW
        Input of the forward call.
    p : `RSignParams`
    upstream : array
        Gradient of the loss with respect to the RSign output.

    Returns
    -------
    grad_x : array
    grad_alpha : 1d array
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    _check_channels(x, p.channels, 'rsign_backward')
    if upstream.shape != x.shape:
        raise ValueError('upstream shape {0} does not match input shape '
                         '{1}'.format(upstream.shape, x.shape))
    grad_x = upstream * approx_sign_grad(x - _per_channel(p.alpha, x.ndim))
    grad_alpha = -upstream.sum(axis=_reduce_axes(x.ndim))
    return grad_x, grad_alpha


def rprelu_forward(x, p):
    """
    RPReLU of a channel-first tensor.

    Parameters
    ----------
    x : array, N C ...
    p : `RPReLUParams`

    Returns
    -------
    array
    """
    x = np.asarray(x, dtype=np.float64)
    _check_channels(x, p.channels, 'rprelu_forward')
    gamma = _per_channel(p.gamma, x.ndim)
    shifted = x - gamma
    out = np.where(x > gamma, shifted, _per_channel(p.beta, x.ndim) * shifted)
    return out + _per_channel(p.zeta, x.ndim)


def rprelu_backward(x, p, upstream):
    """
    Gradients of RPReLU.

    Returns
    -------
    grad_x, grad_beta, grad_gamma, grad_zeta
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    _check_channels(x, p.channels, 'rprelu_backward')
    if upstream.shape != x.shape:
        raise ValueError('upstream shape {0} does not match input shape '
                         '{1}'.format(upstream.shape, x.shape))
    axes = _reduce_axes(x.ndim)
    gamma = _per_channel(p.gamma, x.ndim)
    beta = _per_channel(p.beta, x.ndim)
    upper = x > gamma

    grad_x = upstream * np.where(upper, 1.0, beta)
    grad_beta = (upstream * np.where(upper, 0.0, x - gamma)).sum(axis=axes)
    grad_gamma = (upstream * np.where(upper, -1.0, -beta)).sum(axis=axes)
    grad_zeta = upstream.sum(axis=axes)
    return grad_x, grad_beta, grad_gamma, grad_zeta


def weight_surrogate(w_r):
    """
    Smooth stand-in for the binarized weights: ``scale(w) * clip(w, -1, 1)``.
    """
    w_r = np.asarray(w_r, dtype=np.float64)
    return _filter_scale(w_r) * np.clip(w_r, -1.0, 1.0)


def _filter_scale(w_r):
    return compute_scale(w_r).reshape((-1,) + (1,) * (w_r.ndim - 1))


def binarize_latent_weights(w_r, surrogate=False):
    """
    Scaled binary weights ``scale[o] * sign(w_r)``.

    Returns
    -------
    w_b : array
        The effective weights.
    signs : array
        The +1/-1 factor (or its clipped surrogate), needed by
        `weight_binarize_backward`.
    """
    w_r = np.asarray(w_r, dtype=np.float64)
    signs = np.clip(w_r, -1.0, 1.0) if surrogate else binarize_weights(w_r)
    return _filter_scale(w_r) * signs, signs


def weight_binarize_backward(w_r, upstream_wrt_wb, signs=None):
    """
    Gradient of the latent weights given the gradient of the scaled
    binary weights.

    The sign passes the gradient straight through where ``|w_r| <= 1``
    and blocks it elsewhere; the scale contributes through
    ``d scale[o] / d w_r = sign(w_r) / n``.

    Parameters
    ----------
    w_r : array, OIHW
    upstream_wrt_wb : array, OIHW
    signs : array, optional
        The sign factor used in the forward pass; defaults to the sign of
        ``w_r``.

    Returns
    -------
    grad_w_r : array
    """
    w_r = np.asarray(w_r, dtype=np.float64)
    g = np.asarray(upstream_wrt_wb, dtype=np.float64)
    if g.shape != w_r.shape:
        raise ValueError('gradient shape {0} does not match weights '
                         '{1}'.format(g.shape, w_r.shape))
    if signs is None:
        signs = binarize_weights(w_r)
    n = int(np.prod(w_r.shape[1:]))
    expand = (-1,) + (1,) * (w_r.ndim - 1)

    grad = g * _filter_scale(w_r) * (np.abs(w_r) <= 1.0)
    grad_scale = (g * signs).reshape(w_r.shape[0], -1).sum(axis=1)
    grad += grad_scale.reshape(expand) * np.sign(w_r) / n
    return grad
