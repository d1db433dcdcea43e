import numpy as np
import pytest
from numpy.testing import assert_allclose

from .. import activations
from ..gradcheck import (CHECKS, LAYER_THRESHOLD, NETWORK_THRESHOLD,
                         central_difference, relative_error, run_suite)


def test_central_difference_of_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    grad = central_difference(lambda: float(np.sum(x ** 2)), x)
    assert_allclose(grad, 2 * x, rtol=1e-8)
    assert_allclose(x, [1.0, -2.0, 0.5])


def test_relative_error():
    assert relative_error([0.0], [0.0]) == 0.0
    assert relative_error([1.0, 2.0], [1.0, 2.2]) == pytest.approx(0.2 / 2.2)


def test_suite_passes():
    report = run_suite(seed=0)
    assert list(report['kind']) == list(CHECKS)
    failing = [row['kind'] for row in report if not row['passed']]
    assert failing == []
    assert report['threshold'][-1] == NETWORK_THRESHOLD
    assert report['threshold'][0] == LAYER_THRESHOLD


@pytest.mark.parametrize('seed', [1, 2])
def test_layer_checks_other_seeds(seed):
    kinds = [k for k in CHECKS if k != 'network']
    assert np.all(run_suite(seed=seed, kinds=kinds)['passed'])


def test_flipped_rsign_gradient_is_caught():
    def flipped(x, p, upstream):
        grad_x, grad_alpha = activations.rsign_backward(x, p, upstream)
        return grad_x, -grad_alpha

    report = run_suite(seed=0, rsign_backward=flipped,
                       kinds=['alpha', 'rsign_input'])
    assert not report['passed'][0]
    assert report['passed'][1]


def test_unknown_kind():
    with pytest.raises(ValueError):
        run_suite(kinds=['nonsense'])
