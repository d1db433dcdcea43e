# -*- coding: utf-8 -*-
"""
Training: run configuration, Adam, the linear learning-rate schedule, the
two-step binary training pipeline and the real-valued teacher.

Two-step training first optimizes a network with binary activations and
real-valued weights, then inherits those weights and continues with both
weights and activations binarized. Both steps minimize the distributional
loss against a fixed real-valued teacher (or cross-entropy for ablations).
"""

import configparser
import dataclasses
import os
from collections import OrderedDict

import numpy as np
from astropy import log
from astropy.table import Table

from .arch import Network, NetworkSpec, build_network
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import conf
from .data import load_dataset
from .layers import softmax
from .loss import LOSS_KINDS, LossInputs, compute_loss

__all__ = ['TrainConfig', 'AdamState', 'adam_step', 'linear_lr', 'evaluate',
           'train_two_step', 'train_teacher', 'load_network',
           'network_checkpoint', 'METRICS_COLUMNS']

METRICS_COLUMNS = ('step', 'lr', 'loss', 'eval_acc')

_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


@dataclasses.dataclass
class TrainConfig(object):
    """
    Settings of one training run.

    Defaults for the optimizer, schedule and cadence come from
    `pybnn.config.conf` at construction time.
    """
    variant: str = 'reactnet-a'
    scale: str = 'desk'
    dataset: str = ''
    dataset_kind: str = 'mnist'
    steps: int = 1000
    batch_size: int = dataclasses.field(
        default_factory=lambda: int(conf.batch_size))
    initial_lr: float = dataclasses.field(
        default_factory=lambda: float(conf.initial_lr))
    weight_decay_step1: float = dataclasses.field(
        default_factory=lambda: float(conf.weight_decay_step1))
    weight_decay_step2: float = dataclasses.field(
        default_factory=lambda: float(conf.weight_decay_step2))
    seed: int = 0
    teacher: str = ''
    loss: str = 'distributional'
    skip_step1: bool = False
    weight_clip: float = dataclasses.field(
        default_factory=lambda: float(conf.weight_clip))
    eval_every: int = dataclasses.field(
        default_factory=lambda: int(conf.eval_every))
    eval_samples: int = dataclasses.field(
        default_factory=lambda: int(conf.eval_samples))
    output: str = ''
    metrics: str = ''

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError('steps must be non-negative')
        if self.batch_size < 2:
            raise ValueError('batch_size must be at least 2 (batch '
                             'normalization)')
        if self.loss not in LOSS_KINDS:
            raise ValueError('unknown loss {0!r}; choose from {1}'.format(
                self.loss, ', '.join(LOSS_KINDS)))
        if self.initial_lr < 0:
            raise ValueError('initial_lr must be non-negative')

    @classmethod
    def keys(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping):
        """
        Build from a mapping of key to value (strings are converted to the
        field types). Unknown keys raise `ValueError`.
        """
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - set(types))
        if unknown:
            raise ValueError('unknown config keys: {0}'.format(
                ', '.join(unknown)))
        kwargs = {}
        for key, value in mapping.items():
            kwargs[key] = _convert(key, value, types[key])
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text):
        """
        Parse flat ``key = value`` lines; ``#`` starts a comment.
        """
        parser = configparser.ConfigParser(inline_comment_prefixes=('#',))
        try:
            parser.read_string('[train]\n' + text)
        except configparser.Error as err:
            raise ValueError('malformed config: {0}'.format(err))
        return cls.from_mapping(dict(parser['train']))

    @classmethod
    def from_file(cls, filename):
        with open(filename) as f:
            return cls.from_text(f.read())

    def replace(self, **changes):
        """Copy with some keys changed; None values are ignored."""
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = []
        for key in self.keys():
            value = getattr(self, key)
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append('{0} = {1}'.format(key, value))
        return '\n'.join(lines) + '\n'


def _convert(key, value, kind):
    if not isinstance(value, str):
        return value
    value = value.strip()
    try:
        if kind in (bool, 'bool'):
            if value.lower() in _TRUE:
                return True
            if value.lower() in _FALSE:
                return False
            raise ValueError(value)
        if kind in (int, 'int'):
            return int(value)
        if kind in (float, 'float'):
            return float(value)
    except ValueError:
        raise ValueError('config key {0}: cannot read {1!r} as {2}'.format(
            key, value, getattr(kind, '__name__', kind)))
    return value


class AdamState(object):
    """
    First and second moments per parameter and the step count.
    """

    def __init__(self):
        self.m = OrderedDict()
        self.v = OrderedDict()
        self.t = 0

    def to_dict(self):
        return {'t': self.t, 'm': self.m, 'v': self.v}

    @classmethod
    def from_dict(cls, d):
        state = cls()
        state.t = int(d['t'])
        state.m = OrderedDict(d['m'])
        state.v = OrderedDict(d['v'])
        return state


def decayed(name):
    """Weight decay applies to convolution and classifier weights only."""
    return name.endswith('.weight')


def adam_step(params, grads, state, lr, weight_decay=0.0,
              decay=decayed):
    """
    One Adam update, in place.

    L2 weight decay is added to the gradient of every parameter for which
    ``decay(name)`` is True.

    Parameters
    ----------
    params : dict of arrays
        Updated in place.
    grads : dict of arrays
    state : `AdamState`
    lr : float
    weight_decay : float
    decay : callable, optional
    """
    beta1, beta2 = float(conf.adam_beta1), float(conf.adam_beta2)
    eps = float(conf.adam_epsilon)
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError('{0}: gradient shape {1} does not match '
                             'parameter shape {2}'.format(name, g.shape,
                                                          p.shape))
        if weight_decay and decay(name):
            g = g + weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def linear_lr(step, total, initial_lr):
    """
    ``initial_lr * (1 - step / total)``, reaching 0 at ``step == total``.
    """
    if total <= 0:
        return float(initial_lr)
    return initial_lr * (1.0 - step / float(total))


def evaluate(network, dataset, batch_size=None, bitkernel=False):
    """
    Top-1 accuracy in eval mode.

    Parameters
    ----------
    network : `~pybnn.arch.Network`
    dataset : `~pybnn.data.Dataset`
    batch_size : int, optional
    bitkernel : bool, optional
        Run the 1-bit layers through the packed XNOR-popcount kernels.
    """
    if not len(dataset):
        raise ValueError('cannot evaluate on an empty dataset')
    batch_size = batch_size or int(conf.batch_size)
    if bitkernel:
        network.set_mode(bitkernel=True)
    try:
        correct = 0
        for x, y in dataset.batches(batch_size):
            logits = network.forward(x, training=False)
            correct += int(np.sum(np.argmax(logits, axis=1) == y))
    finally:
        if bitkernel:
            network.set_mode(bitkernel=False)
    return correct / float(len(dataset))


def network_checkpoint(network, step=0, rng=None, config=None,
                       optimizer=None):
    """Wrap a network's state in a `~pybnn.checkpoint.Checkpoint`."""
    return Checkpoint(network.state_dict(), step=step,
                      rng_state=None if rng is None
                      else rng.bit_generator.state,
                      spec_text=network.spec.to_text(),
                      config_text='' if config is None else config.to_text(),
                      optimizer=None if optimizer is None
                      else optimizer.to_dict())


def load_network(source):
    """
    Rebuild a `~pybnn.arch.Network` from a checkpoint file or object.
    """
    checkpoint = source
    if not isinstance(source, Checkpoint):
        if not os.path.exists(source):
            raise FileNotFoundError('no such checkpoint: {0}'.format(source))
        checkpoint = load_checkpoint(source)
    if not checkpoint.spec_text:
        raise ValueError('checkpoint carries no network description')
    network = Network(NetworkSpec.from_text(checkpoint.spec_text))
    network.load_state_dict(checkpoint.params)
    return network


def _batch_stream(dataset, batch_size, rng, augment):
    # single-sample batches are dropped, so one sample never yields a batch
    if len(dataset) < 2:
        raise ValueError('training needs at least 2 samples, got '
                         '{0}'.format(len(dataset)))

    def stream():
        while True:
            for x, y in dataset.batches(batch_size, rng, augment):
                if len(y) >= 2:
                    yield x, y
    return stream()


class _Run(object):
    """Bookkeeping shared by the phases of one training run."""

    def __init__(self, config, train_set, test_set, rng):
        self.config = config
        self.train_set = train_set
        self.eval_set = (test_set.subset(config.eval_samples)
                         if config.eval_samples else test_set)
        self.rng = rng
        self.rows = []
        self.global_step = 0
        self.stream = _batch_stream(train_set, config.batch_size, rng,
                                    augment=config.dataset_kind == 'cifar10')

    def phase(self, network, name, weight_decay, loss_kind, teacher=None):
        """
        Train ``network`` for ``config.steps`` steps with a fresh Adam state
        and a full linear decay of the learning rate.
        """
        config = self.config
        state = AdamState()
        params = network.parameters()
        clip_names = set(network.binary_weight_names())
        log.info('{0}: {1} steps of {2} on {3}, loss {4}'.format(
            name, config.steps, network.spec.name, self.train_set.name,
            loss_kind))
        loss = np.nan
        for t in range(config.steps):
            lr = linear_lr(t, config.steps, config.initial_lr)
            x, y = next(self.stream)
            logits = network.forward(x, training=True)
            teacher_p = None
            if teacher is not None:
                teacher_p = softmax(teacher.forward(x, training=False))
            loss, grad = compute_loss(LossInputs(logits, teacher_p, y),
                                      loss_kind)
            network.zero_grad()
            grads = network.backward(grad)
            adam_step(params, grads, state, lr, weight_decay)
            if config.weight_clip > 0:
                for wname in clip_names:
                    np.clip(params[wname], -config.weight_clip,
                            config.weight_clip, out=params[wname])
            if not np.isfinite(loss):
                raise FloatingPointError('{0}: loss diverged at step '
                                         '{1}'.format(name, t + 1))

            self.global_step += 1
            eval_acc = np.nan
            last = t + 1 == config.steps
            if last or (config.eval_every and
                        (t + 1) % config.eval_every == 0):
                eval_acc = evaluate(network, self.eval_set,
                                    config.batch_size)
            self.rows.append((self.global_step, lr, loss, eval_acc))
            if (t + 1) % int(conf.log_every) == 0 or last:
                log.info('{0}: step {1}/{2} lr={3:.3e} loss={4:.4f}{5}'.format(
                    name, t + 1, config.steps, lr, loss,
                    '' if np.isnan(eval_acc)
                    else ' eval_acc={0:.4f}'.format(eval_acc)))
        return state

    def metrics_table(self):
        rows = self.rows or None
        return Table(rows=rows, names=METRICS_COLUMNS,
                     dtype=('i8', 'f8', 'f8', 'f8'))

    def finish(self, network, state):
        checkpoint = network_checkpoint(network, self.global_step, self.rng,
                                        self.config, state)
        if self.config.output:
            save_checkpoint(checkpoint, self.config.output)
        if self.config.metrics:
            self.metrics_table().write(self.config.metrics,
                                       format='ascii.csv', overwrite=True)
            log.info('metrics: {0} rows -> {1}'.format(len(self.rows),
                                                       self.config.metrics))
        return checkpoint


def _datasets(config, datasets):
    if datasets is not None:
        return datasets
    if not config.dataset:
        raise ValueError('no dataset path configured')
    return load_dataset(config.dataset_kind, config.dataset)


def _student(config, train_set, rng, variant=None):
    spec = build_network(variant or config.variant, config.scale,
                         input_shape=train_set.sample_shape,
                         num_classes=max(train_set.num_classes, 2))
    return Network(spec, seed=rng)


def _load_teacher(config, train_set):
    if not config.teacher or not os.path.exists(config.teacher):
        raise FileNotFoundError(
            'the distributional loss needs a teacher checkpoint; {0}'.format(
                'set "teacher"' if not config.teacher
                else 'no such file: {0}'.format(config.teacher)))
    teacher = load_network(config.teacher)
    if tuple(teacher.spec.input_shape) != tuple(train_set.sample_shape):
        raise ValueError('teacher expects inputs of {0}, dataset has '
                         '{1}'.format(teacher.spec.input_shape,
                                      train_set.sample_shape))
    log.info('teacher: {0} from {1}'.format(teacher.spec.name,
                                            config.teacher))
    return teacher


def train_two_step(config, datasets=None):
    """
    Two-step training of a binary network.

    Step 1 trains with binary activations and real-valued weights (weight
    decay ``weight_decay_step1``). Step 2 keeps the weights of step 1 and
    binarizes them too (weight decay ``weight_decay_step2``).

    Parameters
    ----------
    config : `TrainConfig`
    datasets : tuple of `~pybnn.data.Dataset`, optional
        (train, test); loaded from ``config.dataset`` when omitted.

    Returns
    -------
    `~pybnn.checkpoint.Checkpoint`
        Written to ``config.output`` when set; the metrics log goes to
        ``config.metrics`` when set.

    Raises
    ------
    FileNotFoundError
        The distributional loss is requested and the teacher checkpoint is
        missing.
    ValueError
        The training split has fewer than 2 samples.
    """
    train_set, test_set = _datasets(config, datasets)
    teacher = None
    if config.loss == 'distributional':
        teacher = _load_teacher(config, train_set)
    rng = np.random.default_rng(config.seed)
    network = _student(config, train_set, rng)
    run = _Run(config, train_set, test_set, rng)

    state = AdamState()
    if config.skip_step1:
        log.info('train_two_step: skipping step 1')
    else:
        network.set_mode(binarize_weights=False)
        state = run.phase(network, 'train_two_step: step 1 of 2',
                          config.weight_decay_step1, config.loss, teacher)
    network.set_mode(binarize_weights=True)
    state = run.phase(network, 'train_two_step: step 2 of 2',
                      config.weight_decay_step2, config.loss, teacher)
    return run.finish(network, state)


def train_teacher(config, datasets=None):
    """
    Train the real-valued counterpart network (real convolutions, PReLU,
    same topology) with cross-entropy.

    Returns
    -------
    `~pybnn.checkpoint.Checkpoint`
    """
    train_set, test_set = _datasets(config, datasets)
    rng = np.random.default_rng(config.seed)
    network = _student(config, train_set, rng, variant='real')
    run = _Run(config, train_set, test_set, rng)
    state = run.phase(network, 'train_teacher', config.weight_decay_step1,
                      'cross-entropy')
    return run.finish(network, state)
