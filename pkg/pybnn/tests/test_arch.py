import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ..arch import (SCALES, VARIANTS, BlockSpec, Flavor, Network,
                    NetworkSpec, build_network, build_normal_block,
                    build_reduction_block)
from ..modules import BinaryConv2d, Conv2d, RPReLU, RSign
from ..opscount import count_params
from ..tensor import BitTensor


def desk_input(rng, n=4):
    return rng.normal(size=(n,) + SCALES['desk'].input_shape)


@pytest.mark.parametrize('variant', list(VARIANTS))
@pytest.mark.parametrize('scale', list(SCALES))
def test_every_variant_validates(variant, scale):
    spec = build_network(variant, scale)
    exemptions = spec.validate()
    if variant == 'baseline-direct':
        assert exemptions and all('.conv1x1' in e for e in exemptions)
    else:
        assert exemptions == []


def test_block_kinds_and_names():
    spec = build_network('reactnet-a', 'imagenet')
    names = spec.block_names()
    assert names[0] == 'stem0'
    assert names[1] == 'reduction1'
    assert names[2] == 'reduction2'
    assert names[3] == 'normal3'
    assert names[-1] == 'classifier{0}'.format(len(spec.blocks) - 1)
    # the first reduction keeps the resolution
    assert spec.blocks[1].stride == 1
    assert spec.blocks[-1].in_channels == 1024


def test_binary_convs_keep_channels():
    for site in build_network('reactnet-a', 'imagenet').binary_convs():
        assert site.in_channels == site.out_channels


def test_validate_rejects_channel_change():
    spec = build_network('baseline', 'tiny')
    spec.blocks[1] = BlockSpec('normal', 8, 16, binary=True)
    with pytest.raises(ValueError):
        spec.validate()


def test_validate_rejects_broken_chain():
    spec = build_network('baseline', 'tiny')
    spec.blocks[-1] = BlockSpec('classifier', 8, 10, kernel=1, binary=False)
    with pytest.raises(ValueError):
        spec.validate()


def test_validate_rejects_unknown_variant():
    spec = build_network('baseline', 'tiny')
    spec.variant = 'nonsense'
    with pytest.raises(ValueError):
        spec.validate()
    with pytest.raises(ValueError):
        build_network('nonsense')
    with pytest.raises(ValueError):
        Flavor(downsample='nonsense')


def test_spec_text_round_trip():
    spec = build_network('reactnet-b', 'desk')
    again = NetworkSpec.from_text(spec.to_text())
    assert again == spec
    with pytest.raises(ValueError):
        NetworkSpec.from_text('[network]\nname = x\n')


def test_block_builders(rng):
    x = rng.normal(size=(2, 8, 6, 6))
    normal = build_normal_block(8, 'reactnet-a', rng=rng)
    assert normal.forward(x, training=True).shape == (2, 8, 6, 6)
    reduction = build_reduction_block(8, 'reactnet-a', rng=rng)
    assert reduction.forward(x, training=True).shape == (2, 16, 3, 3)
    keep = build_reduction_block(8, 'reactnet-a', stride=1, rng=rng)
    assert keep.forward(x, training=True).shape == (2, 16, 6, 6)
    with pytest.raises(ValueError):
        build_normal_block(0, 'baseline')


@pytest.mark.parametrize('variant', ['reactnet-b', 'reactnet-c',
                                     'baseline-direct', 'real'])
def test_reduction_flavors_run(rng, variant):
    block = build_reduction_block(8, variant, rng=rng)
    x = rng.normal(size=(2, 8, 4, 4))
    out = block.forward(x, training=True)
    assert out.shape == (2, 16, 2, 2)
    dx = block.backward(np.ones_like(out))
    assert dx.shape == x.shape


def test_react_equals_baseline_at_init(rng):
    x = desk_input(rng)
    react = Network(build_network('reactnet-a', 'desk'), seed=3)
    base = Network(build_network('baseline', 'desk'), seed=3)
    assert_array_equal(react.forward(x), base.forward(x))


def test_bitkernel_matches_float_eval(rng):
    x = desk_input(rng, 3)
    net = Network(build_network('reactnet-a', 'desk'), seed=0)
    net.forward(desk_input(rng, 8), training=True)
    reference = net.forward(x)
    net.set_mode(bitkernel=True)
    assert_array_equal(net.forward(x), reference)


def test_bitkernel_feeds_packed_activations(rng):
    net = Network(build_network('baseline', 'tiny'), seed=0)
    net.set_mode(bitkernel=True)
    sign = net._children['normal1'].sign1
    out = sign.forward(rng.normal(size=(2, 8, 8, 8)), training=False)
    assert isinstance(out, BitTensor)


def test_bitkernel_needs_binary_weights():
    net = Network(build_network('baseline', 'tiny'), seed=0)
    net.set_mode(binarize_weights=False)
    with pytest.raises(ValueError):
        net.set_mode(bitkernel=True)


def test_forward_shape_check(rng):
    net = Network(build_network('baseline', 'tiny'), seed=0)
    with pytest.raises(ValueError):
        net.forward(rng.normal(size=(2, 1, 9, 9)))


@pytest.mark.parametrize('variant', list(VARIANTS))
def test_param_count_matches_network(variant):
    spec = build_network(variant, 'desk')
    counts = count_params(spec)
    net = Network(spec, seed=0)
    total = (counts['binary_weights'] + counts['real_weights'] +
             counts['batchnorm'] + counts['activation'])
    assert total == net.parameter_count()

    coefficients = sum(v.size for m in net.modules()
                       if isinstance(m, (RSign, RPReLU))
                       for _, v in m.named_parameters())
    assert coefficients == counts['activation']
    binary = sum(m.weight.size for m in net.modules()
                 if isinstance(m, BinaryConv2d))
    assert binary == counts['binary_weights']


def test_real_variant_has_no_binary_layers():
    net = Network(build_network('real', 'tiny'), seed=0)
    assert not any(isinstance(m, (BinaryConv2d, RSign))
                   for m in net.modules())
    assert any(isinstance(m, Conv2d) for m in net.modules())


def test_backward_names_every_parameter(rng):
    net = Network(build_network('reactnet-a', 'tiny'), seed=0)
    x = rng.normal(size=(4, 1, 8, 8))
    logits = net.forward(x, training=True)
    grads = net.backward(np.ones_like(logits) / logits.size)
    assert list(grads) == list(net.parameters())
    assert net.input_grad.shape == x.shape
    assert 'normal1.sign1.alpha' in grads
    assert 'reduction2.act2.zeta' in grads
    assert grads['reduction2.act2.zeta'].shape == (16,)


def test_state_dict_round_trip(rng):
    a = Network(build_network('reactnet-a', 'tiny'), seed=1)
    b = Network(build_network('reactnet-a', 'tiny'), seed=2)
    a.forward(rng.normal(size=(4, 1, 8, 8)), training=True)
    b.load_state_dict(a.state_dict())
    x = rng.normal(size=(2, 1, 8, 8))
    assert_array_equal(a.forward(x), b.forward(x))

    state = a.state_dict()
    state.pop('stem0.bn.running_mean')
    with pytest.raises(KeyError):
        b.load_state_dict(state)
    state = a.state_dict()
    state['stem0.conv.weight'] = np.zeros((1, 1, 1, 1))
    with pytest.raises(ValueError):
        b.load_state_dict(state)


def test_binary_weight_names():
    net = Network(build_network('reactnet-a', 'tiny'), seed=0)
    names = net.binary_weight_names()
    assert 'normal1.conv3x3.weight' in names
    assert 'reduction2.conv1x1a.weight' in names
    assert 'stem0.conv.weight' not in names
    assert set(names) <= set(net.parameters())


def test_threshold_shift_leaves_block_conv_unchanged(rng):
    for _ in range(20):
        block = build_normal_block(8, 'reactnet-a', rng=rng)
        sign, conv = block.sign1, block.conv3x3
        sign.alpha[...] = rng.normal(0.0, 0.3, 8)
        x = rng.normal(size=(2, 8, 5, 5))
        reference = conv.forward(sign.forward(x))
        i = int(rng.integers(8))
        c = rng.normal(0.0, 2.0)
        x[:, i] += c
        sign.alpha[i] += c
        assert_array_equal(conv.forward(sign.forward(x)), reference)


def test_zero_binary_weights_pass_the_shortcut(rng):
    block = build_normal_block(8, 'reactnet-a', rng=rng)
    for act in (block.act1, block.act2):
        act.beta[...] = rng.normal(0.25, 0.1, 8)
        act.gamma[...] = rng.normal(0.0, 0.2, 8)
        act.zeta[...] = rng.normal(0.0, 0.2, 8)
    block.conv3x3.weight[...] = 0.0
    block.conv1x1.weight[...] = 0.0
    x = rng.normal(size=(2, 8, 4, 4))
    out = block.forward(x)
    assert_array_equal(out, block.act2.forward(block.act1.forward(x)))


def test_zero_weight_concat_halves_match(rng):
    block = build_reduction_block(8, 'reactnet-a', rng=rng)
    block.conv1x1a.weight[...] = 0.0
    block.conv1x1b.weight[...] = 0.0
    out = block.forward(rng.normal(size=(2, 8, 4, 4)))
    assert_array_equal(out[:, :8], out[:, 8:])


def test_paper_scale_alias():
    alias = build_network('reactnet-a', 'paper')
    canonical = build_network('reactnet-a', 'imagenet')
    assert alias.to_text() == canonical.to_text()
    with pytest.raises(ValueError):
        build_network('reactnet-a', 'huge')
