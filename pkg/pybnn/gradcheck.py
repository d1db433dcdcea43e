# -*- coding: utf-8 -*-
"""
Finite-difference verification of every analytic gradient in the engine.

Each check builds a small random problem, reduces the layer output to a
scalar with a fixed random projection and compares the analytic gradient
with central differences in float64. Inputs are resampled away from the
points where the checked function is not differentiable. Binarization is
checked through its smooth surrogates, which are exactly the functions the
backward passes differentiate.
"""

from collections import OrderedDict

import numpy as np
from astropy import log
from astropy.table import Table

from . import activations as act
from . import layers
from .arch import Network, build_network
from .config import conf
from .loss import (LossInputs, cross_entropy, cross_entropy_backward,
                   distributional_loss, distributional_loss_backward)

__all__ = ['central_difference', 'relative_error', 'run_suite', 'CHECKS',
           'LAYER_THRESHOLD', 'NETWORK_THRESHOLD']

LAYER_THRESHOLD = 1e-6
NETWORK_THRESHOLD = 1e-4
_MARGIN = 1e-3


def central_difference(f, x, indices=None, step=None):
    """
    Central differences of the scalar function ``f()`` with respect to the
    entries of ``x``, which ``f`` reads and this function perturbs in place.

    Parameters
    ----------
    f : callable
        No arguments, returns a float.
    x : array
        Restored after every perturbation.
    indices : iterable of tuples, optional
        Entries to perturb; all of them by default.
    step : float, optional
        Defaults to ``conf.fd_step``.

    Returns
    -------
    1d array
        One derivative per perturbed entry (in ``x``'s shape when all entries
        are perturbed).
    """
    h = float(conf.fd_step) if step is None else step
    perturb_all = indices is None
    if perturb_all:
        indices = list(np.ndindex(*x.shape))
    out = np.empty(len(indices))
    for k, idx in enumerate(indices):
        orig = x[idx]
        x[idx] = orig + h
        f_plus = f()
        x[idx] = orig - h
        f_minus = f()
        x[idx] = orig
        out[k] = (f_plus - f_minus) / (2 * h)
    return out.reshape(x.shape) if perturb_all else out


def relative_error(analytic, numeric):
    """
    ``max |a - n| / max(max |a|, max |n|)`` (0 when both vanish).
    """
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _resample_near(x, offset, points, rng, scale=1.0):
    """Redraw entries of ``x`` whose ``x - offset`` lies near a kink."""
    for _ in range(100):
        u = x - offset
        bad = np.zeros(x.shape, dtype=bool)
        for p in points:
            bad |= np.abs(u - p) < _MARGIN
        if not bad.any():
            return x
        x[bad] = rng.normal(0.0, scale, int(bad.sum()))
    raise RuntimeError('could not move samples away from the kinks')


def _bc(v):
    return v.reshape(1, -1, 1, 1)


def _check_alpha(rng, rsign_backward=act.rsign_backward):
    alpha = rng.normal(0.0, 0.3, 2)
    x = _resample_near(rng.normal(0.0, 1.0, (3, 2, 4, 4)), _bc(alpha),
                       (-1.0, 0.0, 1.0), rng)
    r = rng.normal(size=x.shape)
    _, grad_alpha = rsign_backward(x, act.RSignParams(alpha), r)
    alpha_ref = alpha.copy()
    numeric = central_difference(
        lambda: np.sum(r * act.rsign_surrogate(x, alpha, alpha_ref)), alpha)
    return grad_alpha, numeric


def _check_rsign_input(rng, rsign_backward=act.rsign_backward):
    alpha = rng.normal(0.0, 0.3, 3)
    x = _resample_near(rng.normal(0.0, 1.0, (2, 3, 2, 2)), _bc(alpha),
                       (-1.0, 0.0, 1.0), rng)
    r = rng.normal(size=x.shape)
    grad_x, _ = rsign_backward(x, act.RSignParams(alpha), r)
    numeric = central_difference(
        lambda: np.sum(r * act.approx_sign(x - _bc(alpha))), x)
    return grad_x, numeric


def _rprelu_problem(rng):
    p = act.RPReLUParams(rng.normal(0.25, 0.2, 3), rng.normal(0.0, 0.3, 3),
                         rng.normal(0.0, 0.3, 3))
    x = _resample_near(rng.normal(0.0, 1.0, (3, 3, 3, 3)), _bc(p.gamma),
                       (0.0,), rng)
    r = rng.normal(size=x.shape)
    grads = act.rprelu_backward(x, p, r)

    def f():
        return np.sum(r * act.rprelu_forward(x, p))
    return p, x, f, grads


def _check_rprelu(which):
    def check(rng):
        p, x, f, grads = _rprelu_problem(rng)
        target = {'beta': (p.beta, grads[1]), 'gamma': (p.gamma, grads[2]),
                  'zeta': (p.zeta, grads[3]), 'rprelu_input': (x, grads[0])}
        values, analytic = target[which]
        return analytic, central_difference(f, values)
    return check


def _check_bn(which):
    def check(rng):
        p = layers.BatchNormParams(3)
        p.gamma_bn[:] = rng.normal(1.0, 0.3, 3)
        p.beta_bn[:] = rng.normal(0.0, 0.3, 3)
        x = rng.normal(0.5, 2.0, (4, 3, 2, 2))
        r = rng.normal(size=x.shape)
        _, cache = layers.batchnorm_forward(x, p.copy(), True)
        grads = dict(zip(('bn_input', 'bn_gamma', 'bn_beta'),
                         layers.batchnorm_backward(r, cache)))
        values = {'bn_input': x, 'bn_gamma': p.gamma_bn,
                  'bn_beta': p.beta_bn}[which]
        numeric = central_difference(
            lambda: np.sum(r * layers.batchnorm_forward(x, p.copy(),
                                                        True)[0]), values)
        return grads[which], numeric
    return check


def _check_fc(which):
    def check(rng):
        x = rng.normal(size=(4, 5))
        w = rng.normal(size=(3, 5))
        b = rng.normal(size=3)
        r = rng.normal(size=(4, 3))
        grads = dict(zip(('fc_input', 'fc_weight', 'fc_bias'),
                         layers.fc_backward(r, x, w)))
        values = {'fc_input': x, 'fc_weight': w, 'fc_bias': b}[which]
        numeric = central_difference(
            lambda: np.sum(r * layers.fc_forward(x, w, b)), values)
        return grads[which], numeric
    return check


def _check_conv(which):
    def check(rng):
        x = rng.normal(size=(2, 4, 5, 5))
        w = rng.normal(size=(6, 2, 3, 3))
        out, cache = layers.real_conv2d(x, w, stride=2, padding=1, groups=2)
        r = rng.normal(size=out.shape)
        dx, dw = layers.real_conv2d_backward(r, cache)
        values, analytic = (x, dx) if which == 'conv_input' else (w, dw)
        numeric = central_difference(
            lambda: np.sum(r * layers.real_conv2d(x, w, 2, 1, 2)[0]), values)
        return analytic, numeric
    return check


def _check_latent_weight(rng):
    x = np.where(rng.random((2, 3, 4, 4)) < 0.5, -1.0, 1.0)
    w = _resample_near(rng.normal(0.0, 0.6, (4, 3, 3, 3)), 0.0,
                       (-1.0, 0.0, 1.0), rng, scale=0.6)
    w_b, signs = act.binarize_latent_weights(w, surrogate=True)
    out, cache = layers.real_conv2d(x, w_b, 1, 1, pad_value=-1.0)
    r = rng.normal(size=out.shape)
    _, d_wb = layers.real_conv2d_backward(r, cache)
    analytic = act.weight_binarize_backward(w, d_wb, signs)
    numeric = central_difference(
        lambda: np.sum(r * layers.real_conv2d(
            x, act.weight_surrogate(w), 1, 1, pad_value=-1.0)[0]), w)
    return analytic, numeric


def _check_distributional(rng):
    z = rng.normal(size=(4, 5))
    p = layers.softmax(rng.normal(size=(4, 5)))
    analytic = distributional_loss_backward(LossInputs(z, p))
    numeric = central_difference(
        lambda: distributional_loss(LossInputs(z, p)), z)
    return analytic, numeric


def _check_cross_entropy(rng):
    z = rng.normal(size=(4, 5))
    y = rng.integers(0, 5, 4)
    analytic = cross_entropy_backward(LossInputs(z, labels=y))
    numeric = central_difference(
        lambda: cross_entropy(LossInputs(z, labels=y)), z)
    return analytic, numeric


def _check_network(rng, n_coords=48):
    """
    Whole tiny ReActNet in surrogate mode, cross-entropy loss, random
    coordinates across all parameter tensors. Perturbations that move any
    RPReLU input across its kink are redrawn.
    """
    net = Network(build_network('reactnet-a', 'tiny'), seed=rng)
    for name, value in net.named_parameters():
        owner, leaf = name.rsplit('.', 1)
        if not owner.rsplit('.', 1)[-1].startswith(('act', 'sign')):
            continue
        if leaf == 'beta':
            value[...] = rng.normal(0.25, 0.1, value.shape)
        else:
            value[...] = rng.normal(0.0, 0.1, value.shape)
    net.set_mode(surrogate=True)
    x = rng.normal(size=(4,) + tuple(net.spec.input_shape))
    y = rng.integers(0, net.spec.num_classes, 4)

    def loss():
        return cross_entropy(LossInputs(net.forward(x, training=True),
                                        labels=y))

    net.zero_grad()
    logits = net.forward(x, training=True)
    base = net.branch_signature()
    grads = net.backward(cross_entropy_backward(LossInputs(logits,
                                                           labels=y)))
    params = net.parameters()
    names = list(params)
    h = float(conf.fd_step)

    analytic, numeric = [], []
    tries = 0
    while len(numeric) < n_coords:
        tries += 1
        if tries > 20 * n_coords:
            raise RuntimeError('too many perturbations crossed an RPReLU kink')
        name = names[rng.integers(len(names))]
        p = params[name]
        idx = tuple(int(rng.integers(n)) for n in p.shape)
        orig = p[idx]
        p[idx] = orig + h
        f_plus, sig_plus = loss(), net.branch_signature()
        p[idx] = orig - h
        f_minus, sig_minus = loss(), net.branch_signature()
        p[idx] = orig
        if not (np.array_equal(sig_plus, base) and
                np.array_equal(sig_minus, base)):
            continue
        analytic.append(grads[name][idx])
        numeric.append((f_plus - f_minus) / (2 * h))
    net.set_mode(surrogate=False)
    return np.array(analytic), np.array(numeric)


CHECKS = OrderedDict([
    ('alpha', _check_alpha),
    ('rsign_input', _check_rsign_input),
    ('beta', _check_rprelu('beta')),
    ('gamma', _check_rprelu('gamma')),
    ('zeta', _check_rprelu('zeta')),
    ('rprelu_input', _check_rprelu('rprelu_input')),
    ('bn_gamma', _check_bn('bn_gamma')),
    ('bn_beta', _check_bn('bn_beta')),
    ('bn_input', _check_bn('bn_input')),
    ('fc_weight', _check_fc('fc_weight')),
    ('fc_bias', _check_fc('fc_bias')),
    ('fc_input', _check_fc('fc_input')),
    ('conv_weight', _check_conv('conv_weight')),
    ('conv_input', _check_conv('conv_input')),
    ('latent_weight', _check_latent_weight),
    ('distributional_loss', _check_distributional),
    ('cross_entropy', _check_cross_entropy),
    ('network', _check_network),
])


def run_suite(seed=0, rsign_backward=None, kinds=None):
    """
    Run the gradient checks.

    Parameters
    ----------
    seed : int
    rsign_backward : callable, optional
        Replacement for `~pybnn.activations.rsign_backward` in the RSign
        checks.
    kinds : list of str, optional
        Subset of `CHECKS` to run.

    Returns
    -------
    report : `~astropy.table.Table`
        Columns ``kind``, ``max_rel_error``, ``threshold``, ``passed``.
    """
    kinds = list(CHECKS) if kinds is None else list(kinds)
    unknown = [k for k in kinds if k not in CHECKS]
    if unknown:
        raise ValueError('unknown gradient checks: {0}'.format(
            ', '.join(unknown)))
    rng = np.random.default_rng(seed)
    rows = []
    for kind in kinds:
        check = CHECKS[kind]
        if rsign_backward is not None and kind in ('alpha', 'rsign_input'):
            analytic, numeric = check(rng, rsign_backward)
        else:
            analytic, numeric = check(rng)
        err = relative_error(analytic, numeric)
        threshold = NETWORK_THRESHOLD if kind == 'network' \
            else LAYER_THRESHOLD
        rows.append((kind, err, threshold, err <= threshold))
        log.debug('run_suite: {0} max rel. error {1:.2e}'.format(kind, err))
    report = Table(rows=rows, names=('kind', 'max_rel_error', 'threshold',
                                     'passed'))
    n_pass = int(np.sum(report['passed']))
    log.info('run_suite: {0}/{1} gradient checks passed (seed {2})'.format(
        n_pass, len(report), seed))
    return report
