# -*- coding: utf-8 -*-
"""
Static BOPs / FLOPs / OPs accounting.

One multiply-accumulate counts as one operation. 1-bit convolutions count
as binary operations (BOPs); the real-valued stem, real downsampling
convolutions and the classifier count as floating point operations
(FLOPs). Batch normalization, pooling and activations are not counted.
The combined figure is ``OPs = BOPs / 64 + FLOPs``.

Besides the static counter, this module keeps a stack of MAC counters that
the actual kernels increment while they run (`instrument`), which gives an
independent brute-force count of a network.
"""

from contextlib import contextmanager

import numpy as np
from astropy import log
from astropy.table import Table

from .tensor import conv_output_size

__all__ = ['OpsReport', 'count_ops', 'count_params', 'instrument',
           'record_macs', 'count_macs', 'BOPS_PER_OP']

BOPS_PER_OP = 64

_active_counters = []


def record_macs(kind, n):
    """
    Add ``n`` multiply-accumulates of ``kind`` ('bops' or 'flops') to every
    active counter. Kernels call this unconditionally; it is a no-op when
    nothing is instrumented.
    """
    for counter in _active_counters:
        counter[kind] = counter.get(kind, 0) + int(n)


@contextmanager
def instrument():
    """
    Count the MACs executed by the kernels inside the ``with`` block.

    >>> with instrument() as macs:  # doctest: +SKIP
    ...     net.forward(x)
    >>> macs['bops']  # doctest: +SKIP
    """
    counter = {'bops': 0, 'flops': 0}
    _active_counters.append(counter)
    try:
        yield counter
    finally:
        _active_counters.remove(counter)


class OpsReport(object):
    """
    Per-layer and total operation counts of a network.

    Parameters
    ----------
    entries : `~astropy.table.Table`
        Columns ``layer``, ``type``, ``bops``, ``flops``.
    name : str, optional
        Label of the counted network.
    """

    def __init__(self, entries, name=''):
        self.entries = entries
        self.name = name

    @property
    def bops(self):
        return int(np.sum(self.entries['bops'], dtype=np.int64))

    @property
    def flops(self):
        return int(np.sum(self.entries['flops'], dtype=np.int64))

    @property
    def ops(self):
        return self.bops / BOPS_PER_OP + self.flops

    def summary_line(self):
        return 'BOPS={0} FLOPS={1} OPS={2:.1f}'.format(
            self.bops, self.flops, self.ops)

    def to_lines(self):
        """
        Machine-readable key-value lines, one per layer.
        """
        return ['layer={0} type={1} bops={2} flops={3}'.format(
                    row['layer'], row['type'], row['bops'], row['flops'])
                for row in self.entries]

    def to_text(self):
        lines = []
        if self.name:
            lines.append('# {0}'.format(self.name))
        lines.extend(self.to_lines())
        lines.append('BOPs  = {0:.4e}'.format(self.bops))
        lines.append('FLOPs = {0:.4e}'.format(self.flops))
        lines.append('OPs   = {0:.4e}'.format(self.ops))
        lines.append(self.summary_line())
        return '\n'.join(lines)


def _conv_macs(c_in, c_out, k, out_h, out_w, groups=1):
    return (c_in // groups) * k * k * c_out * out_h * out_w


def count_ops(spec):
    """
    Count BOPs and FLOPs of a `~pybnn.arch.NetworkSpec`.

    Parameters
    ----------
    spec : `~pybnn.arch.NetworkSpec`
        Must carry a concrete input shape.

    Returns
    -------
    `OpsReport`
    """
    if spec.input_shape is None or len(spec.input_shape) != 3:
        raise ValueError('count_ops needs a spec with a concrete (C, H, W) '
                         'input shape')

    rows = []
    size = spec.input_shape[1]
    for idx, block in enumerate(spec.blocks):
        prefix = '{0}{1}'.format(block.kind, idx)
        cin, cout = block.in_channels, block.out_channels

        if block.kind == 'stem':
            out = conv_output_size(size, block.kernel, block.stride,
                                   block.kernel // 2)
            rows.append((prefix + '.conv', 'real_conv', 0,
                         _conv_macs(cin, cout, block.kernel, out, out)))
            size = out
            continue

        if block.kind == 'classifier':
            rows.append((prefix + '.fc', 'fc', 0, cin * cout))
            continue

        out = conv_output_size(size, 3, block.stride, 1)
        conv_type = 'binary_conv' if block.binary else 'real_conv'
        macs = _conv_macs(cin, cin, 3, out, out)
        rows.append(_entry(prefix + '.conv3x3', conv_type, macs))

        if block.kind == 'normal':
            rows.append(_entry(prefix + '.conv1x1', conv_type,
                               _conv_macs(cin, cin, 1, out, out)))
        elif block.downsample in ('concat-binary', 'concat-real'):
            for half in ('a', 'b'):
                rows.append(_entry(prefix + '.conv1x1' + half, conv_type,
                                   _conv_macs(cin, cin, 1, out, out)))
        elif block.downsample == 'binary-direct':
            rows.append(_entry(prefix + '.conv1x1', 'binary_conv',
                               _conv_macs(cin, cout, 1, out, out)))
        else:
            groups = block.groups
            rows.append(_entry(prefix + '.conv1x1', 'real_conv',
                               _conv_macs(cin, cout, 1, out, out, groups)))
        size = out

    entries = Table(rows=rows, names=('layer', 'type', 'bops', 'flops'),
                    dtype=('U32', 'U16', 'i8', 'i8'))
    report = OpsReport(entries, name=spec.name)
    log.debug('count_ops: {0} {1}'.format(spec.name, report.summary_line()))
    return report


def _entry(layer, conv_type, macs):
    if conv_type == 'binary_conv':
        return (layer, conv_type, macs, 0)
    return (layer, conv_type, 0, macs)


def count_params(spec):
    """
    Count the parameters of a `~pybnn.arch.NetworkSpec` by kind.

    Returns
    -------
    counts : dict
        ``binary_weights`` (latent weights of 1-bit convolutions),
        ``real_weights`` (stem, real convolutions, classifier weights and
        bias), ``batchnorm`` (BN affine parameters), ``activation`` (all
        Sign/PReLU/RSign/RPReLU coefficients), ``react`` (the RSign and
        RPReLU coefficients alone: alpha, beta, gamma and zeta) and
        ``memory_bits``, the deployed size with one bit per binary weight
        and 32 bits per other parameter.
    """
    counts = dict(binary_weights=0, real_weights=0, batchnorm=0,
                  activation=0, react=0)
    for block in spec.blocks:
        cin, cout = block.in_channels, block.out_channels
        if block.kind == 'stem':
            counts['real_weights'] += cout * cin * block.kernel ** 2
            counts['batchnorm'] += 2 * cout
            continue
        if block.kind == 'classifier':
            counts['real_weights'] += cin * cout + cout
            continue

        weight_kind = 'binary_weights' if block.binary else 'real_weights'
        counts[weight_kind] += cin * cin * 9
        counts['batchnorm'] += 2 * cin
        if block.kind == 'normal':
            counts[weight_kind] += cin * cin
            counts['batchnorm'] += 2 * cin
        elif block.downsample in ('concat-binary', 'concat-real'):
            counts[weight_kind] += 2 * cin * cin
            counts['batchnorm'] += 4 * cin
        elif block.downsample == 'binary-direct':
            counts['binary_weights'] += cin * cout
            counts['batchnorm'] += 2 * cout
        else:
            counts['real_weights'] += cin * cout // block.groups
            counts['batchnorm'] += 2 * cout

        for site in block.activation_sites():
            n = site.coefficient_count()
            counts['activation'] += n
            if site.react:
                counts['react'] += n

    other = counts['real_weights'] + counts['batchnorm'] + counts['activation']
    counts['memory_bits'] = counts['binary_weights'] + 32 * other
    return counts


def count_macs(network, input_shape=None):
    """
    Brute-force MAC count: run one sample through ``network`` with the
    kernels instrumented.

    Parameters
    ----------
    network : `~pybnn.arch.Network`
    input_shape : tuple, optional
        (C, H, W); defaults to the network spec's input shape.

    Returns
    -------
    counter : dict with ``bops`` and ``flops``
    """
    if input_shape is None:
        input_shape = network.spec.input_shape
    x = np.zeros((1,) + tuple(input_shape))
    with instrument() as counter:
        network.forward(x, training=False)
    return dict(counter)
