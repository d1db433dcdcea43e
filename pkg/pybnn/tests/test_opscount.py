import pytest

from ..arch import Network, build_network
from ..opscount import (BOPS_PER_OP, count_macs, count_ops, count_params,
                        instrument, record_macs)


def imagenet_report(variant):
    return count_ops(build_network(variant, 'imagenet'))


def test_reactnet_a_imagenet_counts():
    report = imagenet_report('reactnet-a')
    assert report.bops == 4816896000
    assert report.flops == 11862016
    assert report.ops == pytest.approx(0.871e8, rel=0.005)


def test_reactnet_c_imagenet_counts():
    report = imagenet_report('reactnet-c')
    assert report.bops == pytest.approx(4.69e9, rel=0.005)
    assert report.flops == pytest.approx(1.40e8, rel=0.005)
    assert report.ops == pytest.approx(2.14e8, rel=0.005)


def test_reactnet_b_imagenet_counts():
    report = imagenet_report('reactnet-b')
    assert report.bops == imagenet_report('reactnet-c').bops
    assert report.flops == pytest.approx(0.44e8, rel=0.1)
    assert report.ops == report.bops / BOPS_PER_OP + report.flops


def test_react_adds_no_operations():
    a, base = imagenet_report('reactnet-a'), imagenet_report('baseline')
    assert (a.bops, a.flops) == (base.bops, base.flops)


def test_report_lines():
    report = count_ops(build_network('reactnet-a', 'tiny'))
    lines = report.to_lines()
    assert lines[0].startswith('layer=stem0.conv type=real_conv bops=0')
    assert any(line.startswith('layer=reduction2.conv1x1b '
                               'type=binary_conv') for line in lines)
    assert report.summary_line() in report.to_text()


@pytest.mark.parametrize('variant', ['reactnet-a', 'reactnet-b',
                                     'baseline-direct', 'real'])
def test_static_matches_instrumented(variant):
    spec = build_network(variant, 'desk')
    report = count_ops(spec)
    macs = count_macs(Network(spec, seed=0))
    assert (macs['bops'], macs['flops']) == (report.bops, report.flops)


def test_instrumented_bitkernel_counts():
    spec = build_network('reactnet-a', 'tiny')
    net = Network(spec, seed=0)
    net.set_mode(bitkernel=True)
    macs = count_macs(net)
    assert macs['bops'] == count_ops(spec).bops


def test_instrument_nesting():
    with instrument() as outer:
        record_macs('bops', 5)
        with instrument() as inner:
            record_macs('flops', 2)
    record_macs('flops', 100)
    assert outer == {'bops': 5, 'flops': 2}
    assert inner == {'bops': 0, 'flops': 2}


def test_react_overhead_is_small():
    a = count_params(build_network('reactnet-a', 'imagenet'))
    base = count_params(build_network('baseline', 'imagenet'))
    total = a['binary_weights'] + a['real_weights'] + a['batchnorm']
    assert a['react'] > 0 and base['react'] == 0
    assert a['activation'] - base['activation'] < 0.01 * total
    assert a['memory_bits'] > base['memory_bits']


def test_count_ops_needs_input_shape():
    spec = build_network('baseline', 'tiny')
    spec.input_shape = None
    with pytest.raises(ValueError):
        count_ops(spec)

