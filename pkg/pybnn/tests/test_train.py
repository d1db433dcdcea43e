import os

import numpy as np
import pytest
from astropy.table import Table
from numpy.testing import assert_allclose, assert_array_equal

from ..checkpoint import encode_checkpoint, load_checkpoint
from ..data import load_mnist
from ..train import (AdamState, TrainConfig, adam_step, evaluate, linear_lr,
                     load_network, train_teacher, train_two_step)


@pytest.fixture
def datasets(mnist_dir):
    return load_mnist(mnist_dir)


def small_config(tmp_path, **changes):
    config = TrainConfig(scale='tiny', steps=3, batch_size=8, eval_every=2,
                         eval_samples=0, seed=11)
    return config.replace(**changes)


@pytest.fixture
def teacher_file(tmp_path, datasets):
    filename = os.path.join(str(tmp_path), 'teacher.rakt')
    train_teacher(small_config(tmp_path, output=filename), datasets)
    return filename


def test_linear_lr():
    assert linear_lr(0, 10, 1e-3) == 1e-3
    assert linear_lr(5, 10, 1e-3) == pytest.approx(5e-4)
    assert linear_lr(10, 10, 1e-3) == 0.0


def test_adam_first_step():
    params = {'a.weight': np.array([1.0, -1.0]), 'a.beta': np.array([0.5])}
    grads = {'a.weight': np.array([0.3, -2.0]), 'a.beta': np.array([-1.0])}
    state = AdamState()
    adam_step(params, grads, state, lr=0.1, weight_decay=0.0)
    assert state.t == 1
    assert_allclose(params['a.weight'], [0.9, -0.9], rtol=1e-6)
    assert_allclose(params['a.beta'], [0.6], rtol=1e-6)


def test_adam_decays_weights_only():
    params = {'a.weight': np.array([1.0]), 'a.beta': np.array([1.0])}
    grads = {'a.weight': np.array([0.0]), 'a.beta': np.array([0.0])}
    adam_step(params, grads, AdamState(), lr=0.1, weight_decay=0.5)
    assert params['a.weight'][0] < 1.0
    assert params['a.beta'][0] == 1.0


def test_config_from_text():
    config = TrainConfig.from_text(
        'variant = baseline  # ablation row\n'
        'steps = 20\n'
        'skip_step1 = yes\n'
        'initial_lr = 1e-3\n')
    assert config.variant == 'baseline'
    assert config.steps == 20
    assert config.skip_step1 is True
    assert config.initial_lr == 1e-3
    assert TrainConfig.from_text(config.to_text()) == config


def test_config_errors():
    with pytest.raises(ValueError, match='unknown'):
        TrainConfig.from_text('epochs = 3\n')
    with pytest.raises(ValueError):
        TrainConfig.from_text('steps = many\n')
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(loss='hinge')
    with pytest.raises(ValueError):
        TrainConfig(steps=-1)


def test_teacher_training(tmp_path, datasets):
    metrics = os.path.join(str(tmp_path), 'teacher.csv')
    checkpoint = train_teacher(small_config(tmp_path, metrics=metrics),
                               datasets)
    assert checkpoint.step == 3
    assert 'variant = real' in checkpoint.spec_text
    assert len(Table.read(metrics, format='ascii.csv')) == 3


def test_two_step_training(tmp_path, datasets, teacher_file):
    output = os.path.join(str(tmp_path), 'student.rakt')
    metrics = os.path.join(str(tmp_path), 'metrics.csv')
    config = small_config(tmp_path, teacher=teacher_file, output=output,
                          metrics=metrics)
    checkpoint = train_two_step(config, datasets)
    assert checkpoint.step == 6
    assert load_checkpoint(output).step == 6

    table = Table.read(metrics, format='ascii.csv')
    assert list(table.colnames) == ['step', 'lr', 'loss', 'eval_acc']
    assert list(table['step']) == [1, 2, 3, 4, 5, 6]
    # every phase starts at the initial learning rate
    assert table['lr'][0] == pytest.approx(config.initial_lr)
    assert table['lr'][3] == pytest.approx(config.initial_lr)
    assert np.all(np.asarray(table['loss']) >= 0)

    network = load_network(output)
    acc = evaluate(network, datasets[1], batch_size=8)
    assert 0.0 <= acc <= 1.0
    assert evaluate(network, datasets[1], batch_size=8, bitkernel=True) == acc
    for name in network.binary_weight_names():
        assert np.abs(network.parameters()[name]).max() <= \
            config.weight_clip


def test_two_step_is_deterministic(tmp_path, datasets, teacher_file):
    config = small_config(tmp_path, teacher=teacher_file)
    a = train_two_step(config, datasets)
    b = train_two_step(config, datasets)
    for name, value in a.params.items():
        assert_array_equal(b.params[name], value)
    assert encode_checkpoint(a) == encode_checkpoint(b)


def test_skip_step1(tmp_path, datasets):
    config = small_config(tmp_path, loss='cross-entropy', skip_step1=True)
    assert train_two_step(config, datasets).step == 3


def test_missing_teacher(tmp_path, datasets):
    config = small_config(tmp_path, teacher=os.path.join(str(tmp_path),
                                                         'none.rakt'))
    with pytest.raises(FileNotFoundError):
        train_two_step(config, datasets)
    with pytest.raises(FileNotFoundError):
        train_two_step(small_config(tmp_path), datasets)


def test_zero_steps_keeps_initialization(tmp_path, datasets):
    config = small_config(tmp_path, loss='cross-entropy', steps=0)
    checkpoint = train_two_step(config, datasets)
    assert checkpoint.step == 0


def test_single_sample_split_is_rejected(tmp_path, datasets):
    train, test = datasets
    config = small_config(tmp_path, loss='cross-entropy')
    with pytest.raises(ValueError, match='at least 2 samples'):
        train_two_step(config, (train.subset(1), test))
    with pytest.raises(ValueError, match='at least 2 samples'):
        train_teacher(config, (train.subset(1), test))
