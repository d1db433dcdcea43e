import numpy as np
import pytest
from numpy.testing import assert_allclose

from ..layers import softmax
from ..loss import (LossInputs, compute_loss, cross_entropy,
                    cross_entropy_backward, distributional_loss,
                    distributional_loss_backward)


def test_identical_distributions_have_zero_loss(rng):
    z = rng.normal(size=(4, 6))
    loss, grad = compute_loss(LossInputs(z, softmax(z)))
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert_allclose(grad, 0.0, atol=1e-15)


def test_distributional_value():
    z = np.log(np.array([[0.5, 0.25, 0.25]]))
    p = np.array([[0.25, 0.5, 0.25]])
    expected = 0.25 * np.log(0.5) + 0.5 * np.log(2.0)
    assert distributional_loss(LossInputs(z, p)) == pytest.approx(expected)


def test_distributional_is_nonnegative(rng):
    for _ in range(10):
        z = rng.normal(size=(3, 4)) * 5
        p = softmax(rng.normal(size=(3, 4)))
        assert distributional_loss(LossInputs(z, p)) >= 0.0


def test_distributional_gradient(rng):
    z = rng.normal(size=(2, 3))
    p = softmax(rng.normal(size=(2, 3)))
    assert_allclose(distributional_loss_backward(LossInputs(z, p)),
                    (softmax(z) - p) / 2)


def test_cross_entropy_value():
    z = np.log(np.array([[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]))
    loss = cross_entropy(LossInputs(z, labels=[0, 2]))
    assert loss == pytest.approx(-(np.log(0.5) + np.log(0.8)) / 2)


def test_validation(rng):
    z = rng.normal(size=(2, 3))
    with pytest.raises(ValueError):
        compute_loss(LossInputs(z), 'distributional')
    with pytest.raises(ValueError):
        compute_loss(LossInputs(z, softmax(rng.normal(size=(2, 4)))))
    with pytest.raises(ValueError):
        compute_loss(LossInputs(z, np.full((2, 3), 0.5)))
    with pytest.raises(ValueError):
        compute_loss(LossInputs(z, labels=[0, 3]), 'cross-entropy')
    with pytest.raises(ValueError):
        compute_loss(LossInputs(np.full((2, 3), np.nan), labels=[0, 1]),
                     'cross-entropy')
    with pytest.raises(ValueError):
        compute_loss(LossInputs(z, labels=[0, 1]), 'hinge')


def test_one_hot_teacher_is_cross_entropy(rng):
    z = rng.normal(size=(5, 4))
    labels = rng.integers(0, 4, 5)
    one_hot = np.eye(4)[labels]
    inputs = LossInputs(z, one_hot, labels=labels)
    assert distributional_loss(inputs) == pytest.approx(cross_entropy(inputs),
                                                        rel=1e-12)
    assert_allclose(distributional_loss_backward(inputs),
                    cross_entropy_backward(inputs), atol=1e-15)


def test_teacher_with_zeros_accepted():
    z = np.zeros((1, 3))
    loss = distributional_loss(LossInputs(z, [[0.0, 0.0, 1.0]]))
    assert loss == pytest.approx(np.log(3.0))


def test_negative_teacher_rejected():
    with pytest.raises(ValueError):
        distributional_loss(LossInputs(np.zeros((1, 3)), [[-0.5, 0.5, 1.0]]))
