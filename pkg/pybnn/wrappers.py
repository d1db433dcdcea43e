'''
This file contains useful wrappers that chain the primary counting and
training functions of pybnn. These helper routines enable painless
reproduction of, for example, the operation counts of the whole ReActNet
family (operation_count_table) or a complete multi-seed ablation study
(run_ablation).

'''

import os

import numpy as np
from astropy import log
from astropy.table import Table

from .arch import build_network
from .data import load_dataset
from .opscount import count_ops
from .train import (evaluate, load_network, train_teacher, train_two_step)

__all__ = ['operation_count_table', 'run_ablation', 'ablation_orderings',
           'PUBLISHED_OPS', 'ABLATION_ROWS']

# published BOPs, FLOPs and OPs at 224x224
PUBLISHED_OPS = {
    'reactnet-a': (4.82e9, 0.12e8, 0.87e8),
    'reactnet-b': (4.69e9, 0.44e8, 1.63e8),
    'reactnet-c': (4.69e9, 1.40e8, 2.14e8),
}

# label, variant, loss, published ImageNet top-1
ABLATION_ROWS = [
    ('baseline-direct *', 'baseline-direct', 'cross-entropy', 58.2),
    ('baseline-direct', 'baseline-direct', 'distributional', 59.6),
    ('baseline *', 'baseline', 'cross-entropy', 61.1),
    ('baseline', 'baseline', 'distributional', 62.5),
    ('baseline + rsign', 'rsign-only', 'distributional', 66.1),
    ('baseline + rprelu', 'rprelu-only', 'distributional', 67.4),
    ('reactnet-a', 'reactnet-a', 'distributional', 69.4),
    ('real-valued', 'real', 'cross-entropy', 72.4),
]


def operation_count_table(input_size=224,
                     variants=('baseline', 'reactnet-a', 'reactnet-b',
                               'reactnet-c')):
    """
    Count BOPs, FLOPs and OPs of the ImageNet-scale networks and put the
    published figures alongside.

    Parameters
    ----------
    input_size : int, optional
        Side of the square RGB input. (Default is 224)
    variants : sequence of str, optional

    Returns
    -------
    table : `~astropy.table.Table`
        Columns ``variant``, ``bops``, ``flops``, ``ops``,
        ``published_bops``, ``published_flops``, ``published_ops`` (NaN
        where nothing was published).
    """
    rows = []
    for variant in variants:
        spec = build_network(variant, 'imagenet',
                             input_shape=(3, input_size, input_size))
        report = count_ops(spec)
        published = PUBLISHED_OPS.get(variant, (np.nan,) * 3)
        if input_size != 224:
            published = (np.nan,) * 3
        rows.append((variant, report.bops, report.flops, report.ops) +
                    tuple(published))
        log.info('operation_count_table: {0} {1}'.format(variant,
                                                    report.summary_line()))
    return Table(rows=rows, names=('variant', 'bops', 'flops', 'ops',
                                   'published_bops', 'published_flops',
                                   'published_ops'),
                 dtype=('U16', 'i8', 'i8', 'f8', 'f8', 'f8', 'f8'))


def run_ablation(config, seeds=(0, 1, 2), workdir='.', datasets=None,
                 rows=None):
    """
    A wrapper routine to carry out the full ablation study at desk scale.
    For every seed:
    1) train the real-valued network, which also serves as the teacher
    2) two-step train every binary variant against that teacher (or with
       cross-entropy for the rows marked *)
    3) evaluate top-1 accuracy on the test split

    Parameters
    ----------
    config : `~pybnn.train.TrainConfig`
        Shared settings (dataset, steps, batch size, ...). ``variant``,
        ``loss``, ``seed``, ``teacher`` and the output paths are set per
        run.
    seeds : sequence of int, optional
    workdir : str, optional
        Where the teacher checkpoints are written. (Default is '.')
    datasets : tuple of `~pybnn.data.Dataset`, optional
        (train, test); loaded once from ``config.dataset`` when omitted.
    rows : list of tuples, optional
        Subset of `ABLATION_ROWS`.

    Returns
    -------
    table : `~astropy.table.Table`
        One row per ablation entry: ``label``, ``variant``, ``loss``,
        ``published_top1``, ``mean_acc``, ``std_acc`` and the accuracy of
        every seed in ``acc_seed<N>`` columns.
    """
    if datasets is None:
        datasets = load_dataset(config.dataset_kind, config.dataset)
    test_set = datasets[1]
    rows = ABLATION_ROWS if rows is None else rows
    os.makedirs(workdir, exist_ok=True)

    accuracies = {label: [] for label, _, _, _ in rows}
    for seed in seeds:
        teacher_file = os.path.join(workdir, 'teacher-seed{0}.rakt'.format(
            seed))
        teacher_cfg = config.replace(seed=seed, variant='real',
                                     output=teacher_file, metrics='')
        teacher = train_teacher(teacher_cfg, datasets)
        for label, variant, loss, _ in rows:
            if variant == 'real':
                net = load_network(teacher)
            else:
                cfg = config.replace(seed=seed, variant=variant, loss=loss,
                                     teacher=teacher_file, output='',
                                     metrics='')
                net = load_network(train_two_step(cfg, datasets))
            acc = evaluate(net, test_set, config.batch_size)
            accuracies[label].append(acc)
            log.info('run_ablation: seed {0} {1}: {2:.4f}'.format(
                seed, label, acc))

    table_rows = []
    for label, variant, loss, published in rows:
        accs = np.array(accuracies[label])
        table_rows.append((label, variant, loss, published, accs.mean(),
                           accs.std()) + tuple(accs))
    names = (['label', 'variant', 'loss', 'published_top1', 'mean_acc',
              'std_acc'] + ['acc_seed{0}'.format(s) for s in seeds])
    return Table(rows=table_rows, names=names)


def ablation_orderings(table):
    """
    The directional comparisons of the ablation study, from the table
    returned by `run_ablation`.

    Returns
    -------
    dict of str to bool
    """
    mean = {row['label']: row['mean_acc'] for row in table}
    checks = {
        'rsign_over_baseline': ('baseline + rsign', 'baseline'),
        'rprelu_over_baseline': ('baseline + rprelu', 'baseline'),
        'react_over_baseline': ('reactnet-a', 'baseline'),
        'distributional_over_cross_entropy': ('baseline', 'baseline *'),
        'concat_over_direct': ('baseline', 'baseline-direct'),
        'real_over_react': ('real-valued', 'reactnet-a'),
    }
    return {name: bool(mean[hi] >= mean[lo])
            for name, (hi, lo) in checks.items()
            if hi in mean and lo in mean}
