# -*- coding: utf-8 -*-
"""
Executable layers.

Each `Module` owns its parameters, the gradients of its last backward pass
and the cache of its last forward pass. Composite modules (blocks, the
network) name their children, so every parameter has a dotted name such
as ``normal3.conv3x3.weight``.

Binary modules honour three switches set through `Module.set_mode`:

``binarize``
    1-bit convolutions binarize their latent weights (step 2 of two-step
    training). When False the latent weights are used as they are.
``bitkernel``
    In eval mode, RSign emits a `~pybnn.tensor.BitTensor` and the 1-bit
    convolutions run the XNOR-popcount kernels.
``surrogate``
    Binarization is replaced in the forward pass by its smooth surrogate,
    so finite differences see exactly the function the backward pass
    differentiates.
"""

from collections import OrderedDict

import numpy as np

from . import activations as act
from . import layers
from .bitkernel import BinaryConvParams, binary_conv2d
from .tensor import BitTensor, pack

__all__ = ['Module', 'Identity', 'Conv2d', 'BinaryConv2d', 'BatchNorm2d',
           'RSign', 'RPReLU', 'AvgPool2x2', 'GlobalAvgPool', 'Linear',
           'Stem', 'Classifier', 'NormalBlock', 'ReductionBlock']


class Module(object):
    """
    Base class of all executable layers.
    """

    def __init__(self):
        self._params = OrderedDict()
        self._buffers = OrderedDict()
        self._children = OrderedDict()
        self.grads = OrderedDict()

    def add_param(self, name, value):
        self._params[name] = np.asarray(value, dtype=np.float64)
        return self._params[name]

    def add_buffer(self, name, value):
        self._buffers[name] = value
        return value

    def add_child(self, name, module):
        if module is not None:
            self._children[name] = module
        return module

    def children(self):
        return self._children.items()

    def modules(self):
        """This module and all descendants, depth first."""
        for _, m in self.named_modules():
            yield m

    def named_modules(self, prefix=''):
        """(dotted name, module) pairs; the root is named ``prefix``."""
        yield prefix, self
        for cname, child in self._children.items():
            name = prefix + '.' + cname if prefix else cname
            for item in child.named_modules(name):
                yield item

    def named_parameters(self, prefix=''):
        for name, value in self._params.items():
            yield prefix + name, value
        for cname, child in self._children.items():
            for item in child.named_parameters(prefix + cname + '.'):
                yield item

    def named_buffers(self, prefix=''):
        for name, value in self._buffers.items():
            yield prefix + name, value
        for cname, child in self._children.items():
            for item in child.named_buffers(prefix + cname + '.'):
                yield item

    def named_gradients(self, prefix=''):
        for name in self._params:
            grad = self.grads.get(name)
            if grad is None:
                grad = np.zeros_like(self._params[name])
            yield prefix + name, grad
        for cname, child in self._children.items():
            for item in child.named_gradients(prefix + cname + '.'):
                yield item

    def zero_grad(self):
        for m in self.modules():
            m.grads.clear()

    def set_mode(self, **flags):
        """
        Set mode switches (``binarize``, ``bitkernel``, ``surrogate``) on
        every descendant that has them.
        """
        for m in self.modules():
            for key, value in flags.items():
                if value is not None and hasattr(m, key):
                    setattr(m, key, bool(value))

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Identity(Module):

    def forward(self, x, training=False):
        return x

    def backward(self, grad):
        return grad


class Conv2d(Module):
    """
    Real-valued convolution without bias.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1,
                 padding=None, groups=1, rng=None):
        super(Conv2d, self).__init__()
        rng = np.random.default_rng() if rng is None else rng
        fan_in = in_channels // groups * kernel * kernel
        self.weight = self.add_param('weight', rng.normal(
            0.0, np.sqrt(2.0 / fan_in),
            (out_channels, in_channels // groups, kernel, kernel)))
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.groups = groups
        self._cache = None

    def forward(self, x, training=False):
        out, self._cache = layers.real_conv2d(
            x, self.weight, self.stride, self.padding, self.groups)
        return out

    def backward(self, grad):
        dx, self.grads['weight'] = layers.real_conv2d_backward(
            grad, self._cache)
        return dx


class BinaryConv2d(Module):
    """
    1-bit convolution with latent real weights and per-filter scaling.

    The padded border is -1.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1,
                 rng=None):
        super(BinaryConv2d, self).__init__()
        rng = np.random.default_rng() if rng is None else rng
        fan_in = in_channels * kernel * kernel
        self.weight = self.add_param('weight', rng.normal(
            0.0, np.sqrt(2.0 / fan_in),
            (out_channels, in_channels, kernel, kernel)))
        self.stride = stride
        self.padding = kernel // 2
        self.binarize = True
        self.bitkernel = False
        self.surrogate = False
        self._cache = None

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def forward(self, x, training=False):
        packed = isinstance(x, BitTensor)
        use_kernel = self.bitkernel and not training and not self.surrogate
        if packed or (use_kernel and self.binarize):
            if not self.binarize:
                raise ValueError('packed activations need binarized weights')
            self._cache = None
            return binary_conv2d(x if packed else pack(x),
                                 BinaryConvParams(self.weight),
                                 self.stride, self.padding)

        if not self.binarize:
            out, cache = layers.real_conv2d(
                x, self.weight, self.stride, self.padding, pad_value=-1.0,
                mac_kind='bops')
            self._cache = (cache, None)
            return out

        w_b, signs = act.binarize_latent_weights(self.weight, self.surrogate)
        out, cache = layers.real_conv2d(
            x, signs, self.stride, self.padding, pad_value=-1.0,
            mac_kind='bops')
        out *= act.compute_scale(self.weight).reshape(1, -1, 1, 1)
        cache['weight'] = w_b
        self._cache = (cache, signs)
        return out

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError('no differentiable forward pass to '
                               'backpropagate through')
        cache, signs = self._cache
        dx, dw = layers.real_conv2d_backward(grad, cache)
        if signs is not None:
            dw = act.weight_binarize_backward(self.weight, dw, signs)
        self.grads['weight'] = dw
        return dx


class BatchNorm2d(Module):

    def __init__(self, channels):
        super(BatchNorm2d, self).__init__()
        self.params = layers.BatchNormParams(channels)
        self.add_param('gamma', self.params.gamma_bn)
        self.add_param('beta', self.params.beta_bn)
        self.add_buffer('running_mean', self.params.running_mean)
        self.add_buffer('running_var', self.params.running_var)
        self._cache = None

    def forward(self, x, training=False):
        out, self._cache = layers.batchnorm_forward(x, self.params, training)
        return out

    def backward(self, grad):
        dx, self.grads['gamma'], self.grads['beta'] = \
            layers.batchnorm_backward(grad, self._cache)
        return dx


class RSign(Module):
    """
    Sign with a per-channel threshold.

    Parameters
    ----------
    channels : int
    learnable : bool
        If False the threshold stays 0 (plain Sign) and is not a parameter.
    """

    def __init__(self, channels, learnable=True):
        super(RSign, self).__init__()
        self.learnable = learnable
        alpha = np.zeros(channels)
        self.alpha = self.add_param('alpha', alpha) if learnable else alpha
        self.bitkernel = False
        self._alpha_ref = None
        self._x = None

    @property
    def surrogate(self):
        return self._alpha_ref is not None

    @surrogate.setter
    def surrogate(self, value):
        # the threshold seen by the input is frozen when the mode is entered
        self._alpha_ref = self.alpha.copy() if value else None

    def forward(self, x, training=False):
        self._x = x
        if self.surrogate:
            return act.rsign_surrogate(x, self.alpha, self._alpha_ref)
        if self.bitkernel and not training:
            return act.rsign_forward(x, act.RSignParams(self.alpha))
        return act.rsign(x, self.alpha)

    def backward(self, grad):
        grad_x, grad_alpha = act.rsign_backward(
            self._x, act.RSignParams(self.alpha), grad)
        if self.learnable:
            self.grads['alpha'] = grad_alpha
        return grad_x


class RPReLU(Module):
    """
    PReLU with learnable input and output shifts.

    Parameters
    ----------
    channels : int
    learnable_shifts : bool
        If False, gamma and zeta stay 0 and only the slope is learned
        (plain PReLU).
    """

    def __init__(self, channels, learnable_shifts=True):
        super(RPReLU, self).__init__()
        init = act.RPReLUParams.init(channels)
        self.learnable_shifts = learnable_shifts
        self.beta = self.add_param('beta', init.beta)
        if learnable_shifts:
            self.gamma = self.add_param('gamma', init.gamma)
            self.zeta = self.add_param('zeta', init.zeta)
        else:
            self.gamma, self.zeta = init.gamma, init.zeta
        self._x = None
        self.mask = None

    def _coefficients(self):
        return act.RPReLUParams(self.beta, self.gamma, self.zeta)

    def forward(self, x, training=False):
        self._x = x
        self.mask = x > self.gamma.reshape(1, -1, 1, 1)
        return act.rprelu_forward(x, self._coefficients())

    def backward(self, grad):
        grad_x, g_beta, g_gamma, g_zeta = act.rprelu_backward(
            self._x, self._coefficients(), grad)
        self.grads['beta'] = g_beta
        if self.learnable_shifts:
            self.grads['gamma'] = g_gamma
            self.grads['zeta'] = g_zeta
        return grad_x


class AvgPool2x2(Module):

    def forward(self, x, training=False):
        self._shape = x.shape
        return layers.avgpool2x2(x)

    def backward(self, grad):
        return layers.avgpool2x2_backward(grad, self._shape)


class GlobalAvgPool(Module):

    def forward(self, x, training=False):
        self._shape = x.shape
        return layers.global_avgpool(x)

    def backward(self, grad):
        return layers.global_avgpool_backward(grad, self._shape)


class Linear(Module):

    def __init__(self, in_features, out_features, rng=None):
        super(Linear, self).__init__()
        rng = np.random.default_rng() if rng is None else rng
        self.weight = self.add_param('weight', rng.normal(
            0.0, np.sqrt(1.0 / in_features), (out_features, in_features)))
        self.bias = self.add_param('bias', np.zeros(out_features))
        self._x = None

    def forward(self, x, training=False):
        self._x = x
        return layers.fc_forward(x, self.weight, self.bias)

    def backward(self, grad):
        dx, self.grads['weight'], self.grads['bias'] = layers.fc_backward(
            grad, self._x, self.weight)
        return dx


class Stem(Module):
    """Real-valued 3x3 input convolution followed by BN."""

    def __init__(self, in_channels, out_channels, stride, rng=None):
        super(Stem, self).__init__()
        self.conv = self.add_child('conv', Conv2d(
            in_channels, out_channels, 3, stride, rng=rng))
        self.bn = self.add_child('bn', BatchNorm2d(out_channels))

    def forward(self, x, training=False):
        return self.bn.forward(self.conv.forward(x, training), training)

    def backward(self, grad):
        return self.conv.backward(self.bn.backward(grad))


class Classifier(Module):
    """Global average pooling and the fully-connected output layer."""

    def __init__(self, in_features, num_classes, rng=None):
        super(Classifier, self).__init__()
        self.pool = self.add_child('pool', GlobalAvgPool())
        self.fc = self.add_child('fc', Linear(in_features, num_classes, rng))

    def forward(self, x, training=False):
        return self.fc.forward(self.pool.forward(x, training), training)

    def backward(self, grad):
        return self.pool.backward(self.fc.backward(grad))


def _make_sign(flavor, channels):
    if flavor.binary:
        return RSign(channels, learnable=flavor.rsign)
    return Identity()


def _make_prelu(flavor, channels):
    return RPReLU(channels, learnable_shifts=flavor.binary and flavor.rprelu)


def _make_conv(flavor, in_channels, out_channels, kernel, stride, rng):
    if flavor.binary:
        return BinaryConv2d(in_channels, out_channels, kernel, stride, rng)
    return Conv2d(in_channels, out_channels, kernel, stride, rng=rng)


class _Block(Module):
    """
    Shared first unit of every block: activation, 3x3 conv, BN, add the
    (pooled) real-valued input, activation.
    """

    def __init__(self, channels, flavor, stride, rng):
        super(_Block, self).__init__()
        self.flavor = flavor
        self.stride = stride
        self.sign1 = self.add_child('sign1', _make_sign(flavor, channels))
        self.conv3x3 = self.add_child('conv3x3', _make_conv(
            flavor, channels, channels, 3, stride, rng))
        self.bn1 = self.add_child('bn1', BatchNorm2d(channels))
        self.pool = self.add_child(
            'pool', AvgPool2x2() if stride == 2 else None)
        self.act1 = self.add_child('act1', _make_prelu(flavor, channels))

    def _unit1_forward(self, x, training):
        y = self.sign1.forward(x, training)
        y = self.bn1.forward(self.conv3x3.forward(y, training), training)
        shortcut = self.pool.forward(x) if self.pool is not None else x
        return self.act1.forward(y + shortcut, training)

    def _unit1_backward(self, grad):
        grad = self.act1.backward(grad)
        dx = self.sign1.backward(self.conv3x3.backward(
            self.bn1.backward(grad)))
        if self.pool is not None:
            return dx + self.pool.backward(grad)
        return dx + grad


class NormalBlock(_Block):
    """
    Block with equal input and output channels::

        h   = act1(bn1(conv3x3(sign1(x))) + x)
        out = act2(bn2(conv1x1(sign2(h))) + h)
    """

    def __init__(self, channels, flavor, stride=1, rng=None):
        super(NormalBlock, self).__init__(channels, flavor, stride, rng)
        self.sign2 = self.add_child('sign2', _make_sign(flavor, channels))
        self.conv1x1 = self.add_child('conv1x1', _make_conv(
            flavor, channels, channels, 1, 1, rng))
        self.bn2 = self.add_child('bn2', BatchNorm2d(channels))
        self.act2 = self.add_child('act2', _make_prelu(flavor, channels))

    def forward(self, x, training=False):
        h = self._unit1_forward(x, training)
        y = self.bn2.forward(self.conv1x1.forward(
            self.sign2.forward(h, training), training), training)
        return self.act2.forward(y + h, training)

    def backward(self, grad):
        grad = self.act2.backward(grad)
        dh = grad + self.sign2.backward(self.conv1x1.backward(
            self.bn2.backward(grad)))
        return self._unit1_backward(dh)


class ReductionBlock(_Block):
    """
    Block doubling the channel count.

    With the concat downsampling the input of the 1x1 stage is binarized
    once and fed to two parallel 1x1 convolutions, each bypassed by the
    same identity shortcut; their outputs are concatenated. The other
    downsampling flavors replace that pair by a single C -> 2C convolution
    (binary without shortcut, or real-valued, optionally grouped).
    """

    def __init__(self, in_channels, flavor, stride=2, rng=None):
        super(ReductionBlock, self).__init__(in_channels, flavor, stride, rng)
        c = in_channels
        mode = flavor.downsample
        self.mode = mode
        if mode in ('concat-binary', 'concat-real'):
            self.sign2 = self.add_child('sign2', _make_sign(flavor, c))
            self.conv1x1a = self.add_child('conv1x1a', _make_conv(
                flavor, c, c, 1, 1, rng))
            self.bn2a = self.add_child('bn2a', BatchNorm2d(c))
            self.conv1x1b = self.add_child('conv1x1b', _make_conv(
                flavor, c, c, 1, 1, rng))
            self.bn2b = self.add_child('bn2b', BatchNorm2d(c))
        elif mode == 'binary-direct':
            self.sign2 = self.add_child('sign2', _make_sign(flavor, c))
            self.conv1x1 = self.add_child('conv1x1', BinaryConv2d(
                c, 2 * c, 1, 1, rng))
            self.bn2 = self.add_child('bn2', BatchNorm2d(2 * c))
        elif mode in ('real-group4', 'real-full'):
            groups = 4 if mode == 'real-group4' else 1
            self.conv1x1 = self.add_child('conv1x1', Conv2d(
                c, 2 * c, 1, groups=groups, rng=rng))
            self.bn2 = self.add_child('bn2', BatchNorm2d(2 * c))
        else:
            raise ValueError('unknown downsample flavor {0!r}'.format(mode))
        self.act2 = self.add_child('act2', _make_prelu(flavor, 2 * c))

    def forward(self, x, training=False):
        h = self._unit1_forward(x, training)
        if self.mode in ('concat-binary', 'concat-real'):
            a = self.sign2.forward(h, training)
            ya = self.bn2a.forward(self.conv1x1a.forward(a, training),
                                   training)
            yb = self.bn2b.forward(self.conv1x1b.forward(a, training),
                                   training)
            y = np.concatenate([ya + h, yb + h], axis=1)
        elif self.mode == 'binary-direct':
            y = self.bn2.forward(self.conv1x1.forward(
                self.sign2.forward(h, training), training), training)
        else:
            y = self.bn2.forward(self.conv1x1.forward(h, training), training)
        return self.act2.forward(y, training)

    def backward(self, grad):
        grad = self.act2.backward(grad)
        if self.mode in ('concat-binary', 'concat-real'):
            ga, gb = np.split(grad, 2, axis=1)
            da = self.conv1x1a.backward(self.bn2a.backward(ga))
            da += self.conv1x1b.backward(self.bn2b.backward(gb))
            dh = ga + gb + self.sign2.backward(da)
        elif self.mode == 'binary-direct':
            dh = self.sign2.backward(self.conv1x1.backward(
                self.bn2.backward(grad)))
        else:
            dh = self.conv1x1.backward(self.bn2.backward(grad))
        return self._unit1_backward(dh)
