# -*- coding: utf-8 -*-
"""
Command-line interface: ``pybnn train|eval|count-ops|grad-check|inspect``.

Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage
error.
"""

import argparse
import sys

import numpy as np
from astropy import log
from astropy.table import Table

from . import __version__
from .arch import SCALE_ALIASES, SCALES, VARIANTS, Network, build_network
from .data import DATASET_KINDS, load_dataset
from .gradcheck import run_suite
from .loss import LOSS_KINDS
from .modules import RPReLU, RSign
from .opscount import count_macs, count_ops
from .train import TrainConfig, evaluate, load_network, train_teacher, \
    train_two_step
from .wrappers import operation_count_table

__all__ = ['main', 'build_parser']

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

HISTOGRAM_COLUMNS = ('layer', 'site', 'bin_low', 'bin_high', 'count')
_SCALE_CHOICES = list(SCALES) + list(SCALE_ALIASES)


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog='pybnn', description='Binary neural network engine: train, '
        'evaluate, count operations and verify gradients.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='log at DEBUG level')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('train', help='two-step training (or the real-valued '
                       'teacher with --variant real)')
    p.add_argument('--config', help='flat key = value run configuration')
    p.add_argument('--variant', choices=list(VARIANTS))
    p.add_argument('--scale', choices=_SCALE_CHOICES)
    p.add_argument('--dataset', help='dataset directory')
    p.add_argument('--dataset-kind', choices=DATASET_KINDS)
    p.add_argument('--steps', type=int, help='training steps per phase')
    p.add_argument('--batch-size', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--teacher', help='teacher checkpoint')
    p.add_argument('--loss', choices=LOSS_KINDS)
    p.add_argument('--skip-step1', action='store_true', default=None)
    p.add_argument('--output', help='checkpoint file (default pybnn.rakt)')
    p.add_argument('--metrics', help='metrics CSV (default metrics.csv)')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='top-1 accuracy of a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--dataset-kind', choices=DATASET_KINDS, default='mnist')
    p.add_argument('--split', choices=('train', 'test'), default='test')
    p.add_argument('--limit', type=int, default=0,
                   help='evaluate on the first N samples only')
    p.add_argument('--bitkernel', action='store_true',
                   help='run the 1-bit layers through XNOR-popcount')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('count-ops', help='BOPs, FLOPs and OPs of a variant')
    p.add_argument('--variant', choices=list(VARIANTS), default='reactnet-a')
    p.add_argument('--scale', choices=_SCALE_CHOICES, default='imagenet')
    p.add_argument('--input-size', type=int)
    p.add_argument('--table', action='store_true',
                   help='reproduce the ReActNet operation-count table')
    p.add_argument('--instrument', action='store_true',
                   help='also count by running the instrumented kernels')
    p.set_defaults(func=cmd_count_ops)

    p = sub.add_parser('grad-check', help='finite-difference gradient suite')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser('inspect', help='coefficient summaries and '
                       'activation histograms')
    p.add_argument('--checkpoint')
    p.add_argument('--variant', choices=list(VARIANTS),
                   help='inspect a freshly initialized network instead')
    p.add_argument('--scale', choices=_SCALE_CHOICES, default='desk')
    p.add_argument('--histogram', metavar='PATH',
                   help='write activation histograms as CSV')
    p.add_argument('--dataset', help='draw the histogram inputs from here')
    p.add_argument('--dataset-kind', choices=DATASET_KINDS, default='mnist')
    p.add_argument('--samples', type=int, default=64)
    p.add_argument('--bins', type=int, default=40)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_inspect)
    return parser


def cmd_train(args):
    config = (TrainConfig.from_file(args.config) if args.config
              else TrainConfig())
    config = config.replace(
        variant=args.variant, scale=args.scale, dataset=args.dataset,
        dataset_kind=args.dataset_kind, steps=args.steps,
        batch_size=args.batch_size, seed=args.seed, teacher=args.teacher,
        loss=args.loss, skip_step1=args.skip_step1, output=args.output,
        metrics=args.metrics)
    if not config.dataset:
        raise UsageError('train: no dataset path (use --dataset or set '
                         'dataset in --config)')
    config = config.replace(output=config.output or 'pybnn.rakt',
                            metrics=config.metrics or 'metrics.csv')
    if config.variant == 'real':
        checkpoint = train_teacher(config)
    else:
        checkpoint = train_two_step(config)
    print('checkpoint={0} step={1} metrics={2}'.format(
        config.output, checkpoint.step, config.metrics))
    return EXIT_OK


def cmd_eval(args):
    network = load_network(args.checkpoint)
    train_set, test_set = load_dataset(args.dataset_kind, args.dataset)
    dataset = train_set if args.split == 'train' else test_set
    if args.limit:
        dataset = dataset.subset(args.limit)
    acc = evaluate(network, dataset, bitkernel=args.bitkernel)
    print('top1={0:.4f} samples={1}'.format(acc, len(dataset)))
    return EXIT_OK


def cmd_count_ops(args):
    if args.table:
        table = operation_count_table(args.input_size or 224)
        table.pprint(max_lines=-1, max_width=-1)
        return EXIT_OK
    default = SCALES[SCALE_ALIASES.get(args.scale, args.scale)].input_shape
    size = args.input_size or default[1]
    spec = build_network(args.variant, args.scale,
                         input_shape=(default[0], size, size))
    report = count_ops(spec)
    print(report.to_text())
    if args.instrument:
        macs = count_macs(Network(spec, seed=0))
        print('instrumented: bops={0} flops={1}'.format(macs['bops'],
                                                        macs['flops']))
        if (macs['bops'], macs['flops']) != (report.bops, report.flops):
            log.error('count-ops: static and instrumented counts differ')
            return EXIT_FAILURE
    return EXIT_OK


def cmd_grad_check(args):
    report = run_suite(seed=args.seed)
    for row in report:
        print('kind={0} max_rel_error={1:.3e} threshold={2:.0e} '
              'passed={3}'.format(row['kind'], row['max_rel_error'],
                                  row['threshold'], bool(row['passed'])))
    return EXIT_OK if np.all(report['passed']) else EXIT_FAILURE


def _inspect_network(args):
    if args.checkpoint:
        return load_network(args.checkpoint)
    if args.variant:
        return Network(build_network(args.variant, args.scale),
                       seed=args.seed)
    raise UsageError('inspect: give --checkpoint or --variant')


def coefficient_summaries(network):
    """
    min/max/mean of every RSign and RPReLU coefficient vector.
    """
    rows = []
    for name, value in network.named_parameters():
        owner, leaf = name.rsplit('.', 1)
        if leaf in ('alpha', 'beta', 'gamma', 'zeta') and \
                owner.rsplit('.', 1)[-1].startswith(('sign', 'act')):
            rows.append((owner, leaf, value.min(), value.max(),
                         value.mean()))
    return Table(rows=rows or None,
                 names=('layer', 'coef', 'min', 'max', 'mean'),
                 dtype=('U64', 'U8', 'f8', 'f8', 'f8'))


def activation_histograms(network, x, bins=40):
    """
    Histograms of the inputs of every RSign and RPReLU site after one
    eval-mode forward pass of ``x``.
    """
    network.forward(x, training=False)
    rows = []
    for name, module in network.named_modules():
        if not isinstance(module, (RSign, RPReLU)) or module._x is None:
            continue
        values = np.ravel(module._x)
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
        layer, site = name.rsplit('.', 1)
        for k in range(bins):
            rows.append((layer, site, edges[k], edges[k + 1], counts[k]))
    return Table(rows=rows or None, names=HISTOGRAM_COLUMNS,
                 dtype=('U64', 'U16', 'f8', 'f8', 'i8'))


def cmd_inspect(args):
    network = _inspect_network(args)
    summaries = coefficient_summaries(network)
    for row in summaries:
        print('layer={0} coef={1} min={2:.6g} max={3:.6g} mean={4:.6g}'.format(
            *row))
    if args.histogram:
        if args.dataset:
            _, test_set = load_dataset(args.dataset_kind, args.dataset)
            x = test_set.images[:args.samples]
        else:
            rng = np.random.default_rng(args.seed)
            x = rng.normal(size=(args.samples,) +
                           tuple(network.spec.input_shape))
        table = activation_histograms(network, x, args.bins)
        table.write(args.histogram, format='ascii.csv', overwrite=True)
        log.info('inspect: {0} histogram rows -> {1}'.format(
            len(table), args.histogram))
    return EXIT_OK


def main(argv=None):
    """
    Run the command line; returns the exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code
    if args.verbose:
        log.setLevel('DEBUG')
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        sys.stderr.write('pybnn: error: {0}\n'.format(err))
        return EXIT_USAGE
    except Exception as err:
        log.error('{0}: {1}'.format(args.command, err))
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
