import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ..activations import (RPReLUParams, RSignParams, approx_sign,
                           approx_sign_grad, binarize_latent_weights,
                           rprelu_backward, rprelu_forward, rsign,
                           rsign_backward, rsign_forward, rsign_surrogate,
                           sign, weight_binarize_backward, weight_surrogate)
from ..tensor import unpack


def test_sign_maps_zero_to_minus_one():
    assert_array_equal(sign([-2.0, 0.0, 1e-12, 3.0]), [-1, -1, 1, 1])


def test_rsign_threshold_per_channel():
    x = np.array([0.2, 0.2, 0.2]).reshape(1, 3, 1, 1)
    out = rsign(x, [0.0, 0.2, 0.5])
    assert_array_equal(out.ravel(), [1.0, -1.0, -1.0])


def test_rsign_with_zero_alpha_is_sign(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    packed = rsign_forward(x, RSignParams.init(3))
    assert_array_equal(unpack(packed), sign(x))


def test_rsign_channel_check(rng):
    with pytest.raises(ValueError):
        rsign_forward(rng.normal(size=(1, 2, 3, 3)), RSignParams.init(3))
    with pytest.raises(ValueError):
        RSignParams([0.0, np.nan])


def test_approx_sign_pieces():
    u = np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
    assert_allclose(approx_sign(u), [-1, -1, -0.75, 0, 0.75, 1, 1])
    assert_allclose(approx_sign_grad(u), [0, 0, 1, 2, 1, 0, 0])


def test_rsign_backward_threshold_gradient(rng):
    x = rng.uniform(-3.0, 3.0, size=(3, 2, 2, 2))
    p = RSignParams([0.1, -0.1])
    upstream = rng.normal(size=x.shape)
    gx, galpha = rsign_backward(x, p, upstream)
    assert_allclose(galpha, -upstream.sum(axis=(0, 2, 3)))
    shifted = x - np.array([0.1, -0.1]).reshape(1, 2, 1, 1)
    assert_allclose(gx, upstream * approx_sign_grad(shifted))


@pytest.mark.parametrize('value', [2.0, 0.0, 0.5, -5.0])
def test_rsign_threshold_gradient_ignores_surrogate(value):
    x = np.full((1, 1, 2, 2), value)
    gx, galpha = rsign_backward(x, RSignParams([0.0]), np.ones_like(x))
    assert_allclose(galpha, [-4.0])
    assert_allclose(gx, approx_sign_grad(x))


def test_rsign_surrogate_partials(rng):
    x = rng.normal(size=(2, 3, 2, 2))
    alpha = rng.normal(0.0, 0.3, 3)
    ref = alpha.copy()
    assert_allclose(rsign_surrogate(x, alpha, ref),
                    approx_sign(x - alpha.reshape(1, 3, 1, 1)))
    shifted = alpha + np.array([0.01, 0.0, 0.0])
    delta = rsign_surrogate(x, shifted, ref) - rsign_surrogate(x, alpha, ref)
    assert_allclose(delta[:, 0], -0.01)
    assert_allclose(delta[:, 1:], 0.0)


def test_rsign_threshold_shift_invariance(rng):
    for _ in range(100):
        channels = int(rng.integers(1, 5))
        x = rng.normal(size=(2, channels, 3, 3))
        alpha = rng.normal(0.0, 0.5, channels)
        c = rng.normal(0.0, 2.0, channels)
        shifted = rsign_forward(x + c.reshape(1, -1, 1, 1),
                                RSignParams(alpha + c))
        base = rsign_forward(x, RSignParams(alpha))
        assert_array_equal(unpack(shifted), unpack(base))


def test_rsign_boundary_is_minus_one():
    x = np.array([0.3, -0.2, 0.1]).reshape(1, 1, 3, 1)
    assert_array_equal(unpack(rsign_forward(x, RSignParams([0.1]))).ravel(),
                       [1, -1, -1])


def test_rprelu_values():
    p = RPReLUParams([0.25], [0.5], [0.1])
    x = np.array([2.0, -1.0, 0.5]).reshape(1, 1, 3)
    assert_allclose(rprelu_forward(x, p).ravel(), [1.6, -0.275, 0.1])


def test_rprelu_unit_slope_is_affine(rng):
    for _ in range(50):
        x = rng.normal(size=(2, 3, 4))
        p = RPReLUParams(np.ones(3), rng.normal(size=3), rng.normal(size=3))
        expected = x - p.gamma.reshape(1, 3, 1) + p.zeta.reshape(1, 3, 1)
        assert_allclose(rprelu_forward(x, p), expected, atol=1e-12)


def test_rprelu_continuous_at_gamma(rng):
    p = RPReLUParams(rng.normal(size=3), rng.normal(size=3),
                     rng.normal(size=3))
    at = np.broadcast_to(p.gamma.reshape(1, 3, 1), (1, 3, 2)).copy()
    assert_allclose(rprelu_forward(at, p),
                    np.broadcast_to(p.zeta.reshape(1, 3, 1), at.shape))
    eps = 1e-9
    above = rprelu_forward(at + eps, p)
    below = rprelu_forward(at - eps, p)
    assert_allclose(above, below, atol=1e-8)


def test_rprelu_coefficient_gradients_match_differences(rng):
    h = 1e-6
    for _ in range(20):
        p = RPReLUParams(rng.normal(0.25, 0.3, 2), rng.normal(0.0, 0.3, 2),
                         rng.normal(0.0, 0.3, 2))
        x = rng.normal(size=(3, 2, 2, 2))
        # keep samples away from the kink
        x = np.where(np.abs(x - p.gamma.reshape(1, 2, 1, 1)) < 1e-3,
                     x + 0.1, x)
        r = rng.normal(size=x.shape)
        _, gb, gg, gz = rprelu_backward(x, p, r)
        for analytic, name in ((gb, 'beta'), (gg, 'gamma'), (gz, 'zeta')):
            values = getattr(p, name)
            numeric = np.empty(2)
            for c in range(2):
                orig = values[c]
                values[c] = orig + h
                f_plus = np.sum(r * rprelu_forward(x, p))
                values[c] = orig - h
                f_minus = np.sum(r * rprelu_forward(x, p))
                values[c] = orig
                numeric[c] = (f_plus - f_minus) / (2 * h)
            assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


def test_rprelu_with_zero_shifts_is_prelu(rng):
    x = rng.normal(size=(2, 4, 3, 3))
    p = RPReLUParams.init(4, slope=0.25)
    assert_allclose(rprelu_forward(x, p), np.where(x > 0, x, 0.25 * x))


def test_rprelu_backward_values():
    p = RPReLUParams([0.25], [0.5], [0.1])
    x = np.array([2.0, -1.0]).reshape(1, 1, 2)
    gx, gb, gg, gz = rprelu_backward(x, p, np.ones_like(x))
    assert_allclose(gx.ravel(), [1.0, 0.25])
    assert_allclose(gb, [-1.5])
    assert_allclose(gg, [-1.25])
    assert_allclose(gz, [2.0])


def test_rprelu_params_mismatch():
    with pytest.raises(ValueError):
        RPReLUParams([0.25, 0.25], [0.0], [0.0])


def test_binarize_latent_weights():
    w = np.array([0.5, -1.5, 0.0, 1.0]).reshape(1, 1, 2, 2)
    w_b, signs = binarize_latent_weights(w)
    assert_array_equal(signs.ravel(), [1, -1, -1, 1])
    assert_allclose(w_b.ravel(), 0.75 * signs.ravel())
    surrogate, clipped = binarize_latent_weights(w, surrogate=True)
    assert_allclose(clipped.ravel(), [0.5, -1.0, 0.0, 1.0])
    assert_allclose(surrogate, weight_surrogate(w))


def test_weight_backward_blocks_large_weights():
    w = np.array([0.5, -1.5, 0.25, 2.0]).reshape(1, 1, 2, 2)
    g = np.ones_like(w)
    grad = weight_binarize_backward(w, g)
    scale = np.abs(w).mean()
    signs = np.array([1, -1, 1, 1]).reshape(w.shape)
    expected = scale * (np.abs(w) <= 1) + signs.sum() * np.sign(w) / 4
    assert_allclose(grad, expected)
    with pytest.raises(ValueError):
        weight_binarize_backward(w, np.ones((1, 1, 1, 4)))
