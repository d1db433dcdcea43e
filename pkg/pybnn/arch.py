# -*- coding: utf-8 -*-
"""
Network descriptions and the sequential engine that runs them.

A `NetworkSpec` is a declarative list of `BlockSpec` entries. The same spec
drives `~pybnn.opscount.count_ops` and the executable `Network`, so the
operation counts always describe the network that actually runs.

Block layout follows MobileNetV1 with every depth-wise/point-wise pair
replaced by a 3x3 and a 1x1 binary convolution, each bypassed by a
real-valued identity shortcut. Blocks that double the channel count
duplicate the binarized input and concatenate the outputs of two parallel
1x1 convolutions.
"""

import configparser
import io
from collections import OrderedDict, namedtuple
from dataclasses import dataclass, field

import numpy as np
from astropy import log

from . import modules
from .tensor import conv_output_size

__all__ = ['Flavor', 'ActivationSite', 'BinaryConvSite', 'BlockSpec',
           'NetworkSpec', 'VARIANTS', 'SCALES', 'SCALE_ALIASES',
           'build_network', 'build_normal_block', 'build_reduction_block',
           'Network']

DOWNSAMPLE_FLAVORS = ('concat-binary', 'concat-real', 'binary-direct',
                      'real-group4', 'real-full')


@dataclass(frozen=True)
class Flavor(object):
    """
    Activation and downsampling choices of a variant.

    Parameters
    ----------
    binary : bool
        1-bit convolutions and sign activations. False gives the
        corresponding real-valued network (real convolutions, PReLU).
    rsign : bool
        Learnable thresholds (RSign) instead of Sign.
    rprelu : bool
        Learnable shifts (RPReLU) instead of PReLU.
    downsample : str
        One of ``concat-binary``, ``concat-real``, ``binary-direct``,
        ``real-group4`` or ``real-full``.
    """
    binary: bool = True
    rsign: bool = False
    rprelu: bool = False
    downsample: str = 'concat-binary'

    def __post_init__(self):
        if self.downsample not in DOWNSAMPLE_FLAVORS:
            raise ValueError('unknown downsample flavor {0!r}'.format(
                self.downsample))


VARIANTS = OrderedDict([
    ('baseline', Flavor(True, False, False, 'concat-binary')),
    ('baseline-direct', Flavor(True, False, False, 'binary-direct')),
    ('rsign-only', Flavor(True, True, False, 'concat-binary')),
    ('rprelu-only', Flavor(True, False, True, 'concat-binary')),
    ('reactnet-a', Flavor(True, True, True, 'concat-binary')),
    ('reactnet', Flavor(True, True, True, 'concat-binary')),
    ('reactnet-b', Flavor(True, True, True, 'real-group4')),
    ('reactnet-c', Flavor(True, True, True, 'real-full')),
    ('real', Flavor(False, False, False, 'concat-real')),
])

# input shape, classes, stem channels, stem stride, (out_channels, stride)
_Scale = namedtuple('_Scale', ['input_shape', 'num_classes', 'stem_channels',
                               'stem_stride', 'schedule'])

SCALES = {
    'imagenet': _Scale((3, 224, 224), 1000, 32, 2,
                    [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1),
                     (512, 2)] + [(512, 1)] * 5 + [(1024, 2), (1024, 1)]),
    'desk': _Scale((1, 32, 32), 10, 16, 1,
                   [(16, 1), (32, 2), (32, 1), (64, 2), (64, 1)]),
    'tiny': _Scale((1, 8, 8), 10, 8, 1, [(8, 1), (16, 2)]),
}

# alternative scale names accepted by build_network
SCALE_ALIASES = {'paper': 'imagenet'}


class ActivationSite(namedtuple('ActivationSite',
                                 ['name', 'kind', 'channels', 'react'])):
    """
    An activation inside a block: ``kind`` is ``sign`` or ``prelu``;
    ``react`` is True when it carries the learnable ReAct coefficients.
    """
    __slots__ = ()

    def coefficient_count(self):
        """Learnable coefficients: alpha, or beta (+ gamma, zeta)."""
        if self.kind == 'sign':
            return self.channels if self.react else 0
        return 3 * self.channels if self.react else self.channels


BinaryConvSite = namedtuple('BinaryConvSite', ['layer', 'in_channels',
                                               'out_channels', 'exempt'])


@dataclass
class BlockSpec(object):
    """
    One entry of a `NetworkSpec`.

    ``kind`` is ``stem``, ``normal``, ``reduction`` or ``classifier``. For
    the stem, ``kernel`` and ``stride`` describe its real convolution; for
    the classifier the channels are the feature and class counts.
    """
    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    binary: bool = True
    rsign: bool = False
    rprelu: bool = False
    downsample: str = 'none'
    groups: int = 1

    def flavor(self):
        return Flavor(self.binary, self.rsign, self.rprelu,
                      self.downsample if self.downsample != 'none'
                      else 'concat-binary')

    def activation_sites(self):
        """
        The Sign/RSign and PReLU/RPReLU sites of a normal or reduction
        block, in execution order.
        """
        if self.kind not in ('normal', 'reduction'):
            return []
        c = self.in_channels
        sites = []
        if self.binary:
            sites.append(ActivationSite('sign1', 'sign', c, self.rsign))
        sites.append(ActivationSite('act1', 'prelu', c,
                                    self.binary and self.rprelu))
        has_sign2 = (self.kind == 'normal' or self.downsample in
                     ('concat-binary', 'concat-real', 'binary-direct'))
        if self.binary and has_sign2:
            sites.append(ActivationSite('sign2', 'sign', c, self.rsign))
        sites.append(ActivationSite('act2', 'prelu', self.out_channels,
                                    self.binary and self.rprelu))
        return sites

    def binary_convs(self, prefix):
        if not self.binary or self.kind not in ('normal', 'reduction'):
            return []
        c = self.in_channels
        convs = [BinaryConvSite(prefix + '.conv3x3', c, c, False)]
        if self.kind == 'normal':
            convs.append(BinaryConvSite(prefix + '.conv1x1', c, c, False))
        elif self.downsample == 'concat-binary':
            convs.append(BinaryConvSite(prefix + '.conv1x1a', c, c, False))
            convs.append(BinaryConvSite(prefix + '.conv1x1b', c, c, False))
        elif self.downsample == 'binary-direct':
            convs.append(BinaryConvSite(prefix + '.conv1x1', c,
                                        self.out_channels, True))
        return convs


@dataclass
class NetworkSpec(object):
    """
    Declarative description of a network.

    Parameters
    ----------
    name : str
    variant : str
        Key of `VARIANTS`.
    input_shape : tuple of int
        (C, H, W) of one sample.
    num_classes : int
    blocks : list of `BlockSpec`
        Stem first, classifier last.
    """
    name: str
    variant: str
    input_shape: tuple
    num_classes: int
    blocks: list = field(default_factory=list)

    @property
    def flavor(self):
        return VARIANTS[self.variant]

    @property
    def use_rsign(self):
        return self.flavor.rsign

    @property
    def use_rprelu(self):
        return self.flavor.rprelu

    @property
    def concat_downsample(self):
        return self.flavor.downsample.startswith('concat')

    def block_names(self):
        return ['{0}{1}'.format(b.kind, i) for i, b in enumerate(self.blocks)]

    def binary_convs(self):
        """All 1-bit convolutions as `BinaryConvSite` entries."""
        sites = []
        for name, block in zip(self.block_names(), self.blocks):
            sites.extend(block.binary_convs(name))
        return sites

    def validate(self):
        """
        Check that consecutive blocks chain, that the spatial size stays
        positive and that every 1-bit convolution has equal input and
        output channel counts.

        The single 1-bit C -> 2C convolution of the ``binary-direct``
        downsampling ablation is the only exemption.

        Returns
        -------
        exemptions : list of str
            Layer ids exempt from the channel rule.

        Raises
        ------
        ValueError
        """
        if self.variant not in VARIANTS:
            raise ValueError('unknown variant {0!r}'.format(self.variant))
        if len(self.input_shape) != 3:
            raise ValueError('input_shape must be (C, H, W)')
        if not self.blocks or self.blocks[0].kind != 'stem':
            raise ValueError('a network starts with a stem block')
        if self.blocks[-1].kind != 'classifier':
            raise ValueError('a network ends with a classifier block')
        if self.blocks[0].in_channels != self.input_shape[0]:
            raise ValueError('stem expects {0} input channels, input has '
                             '{1}'.format(self.blocks[0].in_channels,
                                          self.input_shape[0]))
        if self.blocks[-1].out_channels != self.num_classes:
            raise ValueError('classifier emits {0} classes, spec has '
                             '{1}'.format(self.blocks[-1].out_channels,
                                          self.num_classes))

        names = self.block_names()
        size = self.input_shape[1]
        for k, block in enumerate(self.blocks):
            if k and block.in_channels != self.blocks[k - 1].out_channels:
                raise ValueError('{0} takes {1} channels but {2} emits '
                                 '{3}'.format(names[k], block.in_channels,
                                              names[k - 1],
                                              self.blocks[k - 1].out_channels))
            if block.kind == 'reduction' and \
                    block.out_channels != 2 * block.in_channels:
                raise ValueError('{0}: a reduction block doubles the channel '
                                 'count'.format(names[k]))
            if block.kind == 'normal' and \
                    block.out_channels != block.in_channels:
                raise ValueError('{0}: a normal block keeps the channel '
                                 'count'.format(names[k]))
            if block.kind in ('stem', 'normal', 'reduction'):
                padding = block.kernel // 2 if block.kind == 'stem' else 1
                size = conv_output_size(size, block.kernel if
                                        block.kind == 'stem' else 3,
                                        block.stride, padding)

        exemptions = []
        for site in self.binary_convs():
            if site.in_channels == site.out_channels:
                continue
            if site.exempt:
                exemptions.append(site.layer)
                continue
            raise ValueError('1-bit convolution {0} maps {1} to {2} '
                             'channels'.format(site.layer, site.in_channels,
                                               site.out_channels))
        return exemptions

    def to_text(self):
        """
        INI-style text: a ``[network]`` section and one ``[block.N]``
        section per block.
        """
        parser = configparser.ConfigParser()
        parser['network'] = OrderedDict([
            ('name', self.name),
            ('variant', self.variant),
            ('input_shape', ','.join(str(v) for v in self.input_shape)),
            ('num_classes', str(self.num_classes))])
        for k, b in enumerate(self.blocks):
            parser['block.{0}'.format(k)] = OrderedDict([
                ('kind', b.kind),
                ('in_channels', str(b.in_channels)),
                ('out_channels', str(b.out_channels)),
                ('kernel', str(b.kernel)),
                ('stride', str(b.stride)),
                ('binary', str(b.binary).lower()),
                ('rsign', str(b.rsign).lower()),
                ('rprelu', str(b.rprelu).lower()),
                ('downsample', b.downsample),
                ('groups', str(b.groups))])
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()

    @classmethod
    def from_text(cls, text):
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
            net = parser['network']
            blocks = []
            k = 0
            while parser.has_section('block.{0}'.format(k)):
                sec = parser['block.{0}'.format(k)]
                blocks.append(BlockSpec(
                    kind=sec['kind'],
                    in_channels=sec.getint('in_channels'),
                    out_channels=sec.getint('out_channels'),
                    kernel=sec.getint('kernel'),
                    stride=sec.getint('stride'),
                    binary=sec.getboolean('binary'),
                    rsign=sec.getboolean('rsign'),
                    rprelu=sec.getboolean('rprelu'),
                    downsample=sec['downsample'],
                    groups=sec.getint('groups')))
                k += 1
            spec = cls(name=net['name'], variant=net['variant'],
                       input_shape=tuple(int(v) for v in
                                         net['input_shape'].split(',')),
                       num_classes=net.getint('num_classes'), blocks=blocks)
        except (configparser.Error, KeyError) as err:
            raise ValueError('malformed network description: {0}'.format(err))
        spec.validate()
        return spec


def build_network(variant, scale='desk', input_shape=None, num_classes=None):
    """
    Emit the `NetworkSpec` of a named variant.

    Parameters
    ----------
    variant : str
        Key of `VARIANTS`: ``baseline``, ``baseline-direct``,
        ``rsign-only``, ``rprelu-only``, ``reactnet-a`` (or ``reactnet``),
        ``reactnet-b``, ``reactnet-c`` or ``real``.
    scale : {'desk', 'imagenet', 'tiny'}
        Or an alias from `SCALE_ALIASES`. ``imagenet`` follows the
        MobileNetV1 schedule on 224x224 inputs, ``desk`` is a five-block
        analog for 32x32 inputs and ``tiny`` a two-block net for gradient
        checks.
    input_shape : tuple, optional
        (C, H, W); overrides the scale's default.
    num_classes : int, optional
        Overrides the scale's default.

    Returns
    -------
    spec : `NetworkSpec`
    """
    if variant not in VARIANTS:
        raise ValueError('unknown variant {0!r}; choose from {1}'.format(
            variant, ', '.join(VARIANTS)))
    scale = SCALE_ALIASES.get(scale, scale)
    if scale not in SCALES:
        raise ValueError('unknown scale {0!r}; choose from {1}'.format(
            scale, ', '.join(SCALES)))
    flavor = VARIANTS[variant]
    sc = SCALES[scale]
    input_shape = tuple(input_shape) if input_shape else sc.input_shape
    num_classes = num_classes or sc.num_classes

    blocks = [BlockSpec('stem', input_shape[0], sc.stem_channels, kernel=3,
                        stride=sc.stem_stride, binary=False)]
    channels = sc.stem_channels
    for out, stride in sc.schedule:
        if out == channels:
            kind, downsample, groups = 'normal', 'none', 1
        else:
            kind, downsample = 'reduction', flavor.downsample
            groups = 4 if downsample == 'real-group4' else 1
        blocks.append(BlockSpec(kind, channels, out, kernel=3, stride=stride,
                                binary=flavor.binary, rsign=flavor.rsign,
                                rprelu=flavor.rprelu, downsample=downsample,
                                groups=groups))
        channels = out
    blocks.append(BlockSpec('classifier', channels, num_classes, kernel=1,
                            binary=False))

    spec = NetworkSpec('{0}-{1}'.format(variant, scale), variant,
                       input_shape, num_classes, blocks)
    spec.validate()
    return spec


def build_normal_block(channels, flavor, stride=1, rng=None):
    """
    Executable block with ``channels`` in and out.

    Parameters
    ----------
    channels : int
    flavor : `Flavor` or str
        A `Flavor` or a key of `VARIANTS`.
    """
    if channels <= 0:
        raise ValueError('channels must be positive')
    if isinstance(flavor, str):
        flavor = VARIANTS[flavor]
    return modules.NormalBlock(channels, flavor, stride, rng)


def build_reduction_block(in_channels, flavor, stride=2, rng=None):
    """
    Executable block mapping ``in_channels`` to ``2 * in_channels``.
    """
    if in_channels <= 0:
        raise ValueError('in_channels must be positive')
    if isinstance(flavor, str):
        flavor = VARIANTS[flavor]
    return modules.ReductionBlock(in_channels, flavor, stride, rng)


class Network(modules.Module):
    """
    Sequential engine executing a `NetworkSpec`.

    Parameters
    ----------
    spec : `NetworkSpec`
    seed : int or `numpy.random.Generator`, optional
        Source of the weight initialization.
    """

    def __init__(self, spec, seed=None):
        super(Network, self).__init__()
        spec.validate()
        self.spec = spec
        self.binarize_weights = True
        rng = np.random.default_rng(seed)
        for name, block in zip(spec.block_names(), spec.blocks):
            self.add_child(name, self._build(block, rng))
        log.debug('Network: built {0} with {1} parameters'.format(
            spec.name, self.parameter_count()))

    @staticmethod
    def _build(block, rng):
        if block.kind == 'stem':
            return modules.Stem(block.in_channels, block.out_channels,
                                block.stride, rng)
        if block.kind == 'classifier':
            return modules.Classifier(block.in_channels, block.out_channels,
                                      rng)
        flavor = block.flavor()
        if block.kind == 'normal':
            return build_normal_block(block.in_channels, flavor,
                                      block.stride, rng)
        return build_reduction_block(block.in_channels, flavor,
                                     block.stride, rng)

    def forward(self, x, training=False):
        """
        Logits of a batch.

        Parameters
        ----------
        x : array, NCHW
            Must match the network's input shape.
        training : bool
            Batch statistics and BN running-stat updates when True.

        Returns
        -------
        logits : array (N, num_classes)
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != tuple(self.spec.input_shape):
            raise ValueError('input shape {0} does not match (N,) + '
                             '{1}'.format(x.shape,
                                          tuple(self.spec.input_shape)))
        for child in self._children.values():
            x = child.forward(x, training)
        return x

    def backward(self, grad):
        """
        Backpropagate the gradient of the loss with respect to the logits.

        Returns
        -------
        grads : OrderedDict
            Gradient of every trainable parameter, keyed like
            `parameters`.
        """
        for child in reversed(list(self._children.values())):
            grad = child.backward(grad)
        self.input_grad = grad
        return OrderedDict(self.named_gradients())

    def parameters(self):
        return OrderedDict(self.named_parameters())

    def parameter_count(self):
        return int(sum(v.size for _, v in self.named_parameters()))

    def set_mode(self, binarize_weights=None, bitkernel=None, surrogate=None):
        """
        Switch the execution mode of every binary layer.

        Parameters
        ----------
        binarize_weights : bool, optional
            False runs 1-bit convolutions on their latent real weights.
        bitkernel : bool, optional
            Evaluate through packed XNOR-popcount kernels.
        surrogate : bool, optional
            Use the smooth binarization surrogates in the forward pass.
        """
        if binarize_weights is not None:
            self.binarize_weights = bool(binarize_weights)
        if bitkernel and not self.binarize_weights:
            raise ValueError('the packed kernels need binarized weights')
        super(Network, self).set_mode(binarize=binarize_weights,
                                      bitkernel=bitkernel,
                                      surrogate=surrogate)

    def state_dict(self):
        """Copies of all parameters and BN running statistics."""
        state = OrderedDict()
        for name, value in self.named_parameters():
            state[name] = value.copy()
        for name, value in self.named_buffers():
            state[name] = value.copy()
        return state

    def load_state_dict(self, state):
        """
        Overwrite parameters and buffers in place.

        Raises
        ------
        KeyError
            If ``state`` misses an entry or has an unknown one.
        ValueError
            On a shape mismatch.
        """
        targets = OrderedDict(self.named_parameters())
        targets.update(self.named_buffers())
        missing = set(targets) - set(state)
        unknown = set(state) - set(targets)
        if missing or unknown:
            raise KeyError('state mismatch; missing {0}, unknown {1}'.format(
                sorted(missing), sorted(unknown)))
        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ValueError('{0}: shape {1} does not match {2}'.format(
                    name, value.shape, target.shape))
            target[...] = value

    def branch_signature(self):
        """
        Which side of its kink every RPReLU input fell on in the last
        forward pass, as one flat boolean array.
        """
        masks = [m.mask.ravel() for m in self.modules()
                 if isinstance(m, modules.RPReLU) and m.mask is not None]
        if not masks:
            return np.zeros(0, dtype=bool)
        return np.concatenate(masks)

    def binary_weight_names(self):
        return [name + '.weight' for name, m in self.named_modules()
                if isinstance(m, modules.BinaryConv2d)]
