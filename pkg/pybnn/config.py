# Licensed under a 3-clause BSD style license - see LICENSE.txt
"""
Package-wide defaults for pybnn.

Values can be changed at runtime, e.g.::

    >>> from pybnn.config import conf
    >>> conf.bn_momentum = 0.05  # doctest: +SKIP

or persistently through the astropy configuration file for ``pybnn``.
"""

from astropy import config as _config

__all__ = ['Conf', 'conf']


class Conf(_config.ConfigNamespace):
    """
    Configuration parameters for `pybnn`.
    """
    bn_epsilon = _config.ConfigItem(
        1e-5, 'Variance floor added inside batch normalization.')
    bn_momentum = _config.ConfigItem(
        0.1, 'Weight of the batch statistic in the running-stat update.')
    prelu_init_slope = _config.ConfigItem(
        0.25, 'Initial negative-side slope of PReLU and RPReLU.')

    adam_beta1 = _config.ConfigItem(0.9, 'Adam first-moment decay.')
    adam_beta2 = _config.ConfigItem(0.999, 'Adam second-moment decay.')
    adam_epsilon = _config.ConfigItem(1e-8, 'Adam denominator floor.')

    initial_lr = _config.ConfigItem(
        5e-4, 'Initial learning rate of the linear decay schedule.')
    weight_decay_step1 = _config.ConfigItem(
        1e-5, 'L2 weight decay during step 1 (binary activations, '
              'real weights).')
    weight_decay_step2 = _config.ConfigItem(
        0.0, 'L2 weight decay during step 2 (binary weights and '
             'activations).')
    weight_clip = _config.ConfigItem(
        1.05, 'Latent binary-conv weights are clipped to [-clip, clip] '
              'after every update. Set to 0 to disable.')
    batch_size = _config.ConfigItem(64, 'Default mini-batch size.')

    log_every = _config.ConfigItem(
        50, 'Training steps between progress log lines.')
    eval_every = _config.ConfigItem(
        500, 'Training steps between evaluations written to the '
             'metrics log.')
    eval_samples = _config.ConfigItem(
        2000, 'Test samples used for the periodic evaluations (0 = all).')

    fd_step = _config.ConfigItem(
        1e-5, 'Step of the central finite differences in the gradient '
              'suite.')
    kernel_chunk_words = _config.ConfigItem(
        1 << 22, 'Upper bound on the number of 64-bit words materialized '
                 'at once by the XNOR-popcount GEMM.')


conf = Conf()
