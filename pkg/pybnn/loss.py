# -*- coding: utf-8 -*-
"""
Distributional loss between a binary student and a real-valued teacher,
and plain cross-entropy.

The distributional loss is the batch mean of KL(p_teacher || p_student),
the KL divergence from the teacher's softmax output to the student's. The
teacher is a fixed target: it never receives a gradient.
"""

import numpy as np
from scipy import special

from .layers import log_softmax, softmax

__all__ = ['LossInputs', 'distributional_loss',
           'distributional_loss_backward', 'cross_entropy',
           'cross_entropy_backward', 'compute_loss', 'LOSS_KINDS']

LOSS_KINDS = ('distributional', 'cross-entropy')


class LossInputs(object):
    """
    Everything a loss needs for one batch.

    Parameters
    ----------
    student_logits : 2d array (n, K)
    teacher_probabilities : 2d array (n, K), optional
        Softmax output of the teacher, computed outside the gradient path.
    labels : 1d int array (n,), optional
    """

    def __init__(self, student_logits, teacher_probabilities=None,
                 labels=None):
        self.student_logits = np.asarray(student_logits, dtype=np.float64)
        self.teacher_probabilities = (
            None if teacher_probabilities is None
            else np.asarray(teacher_probabilities, dtype=np.float64))
        self.labels = None if labels is None else np.asarray(labels)

    @property
    def n(self):
        return self.student_logits.shape[0]

    def validate(self, need_teacher=False, need_labels=False):
        """
        Raises
        ------
        ValueError
            On shape mismatches, non-finite logits, a missing input or a
            teacher output that is not a probability distribution.
        """
        z = self.student_logits
        if z.ndim != 2 or z.shape[0] == 0:
            raise ValueError('student logits must be (n, K) with n > 0, got '
                             '{0}'.format(z.shape))
        if not np.all(np.isfinite(z)):
            raise ValueError('student logits contain non-finite values')

        p = self.teacher_probabilities
        if need_teacher and p is None:
            raise ValueError('teacher probabilities are required')
        if p is not None:
            if p.shape != z.shape:
                raise ValueError('teacher shape {0} does not match student '
                                 'shape {1}'.format(p.shape, z.shape))
            if np.any(~np.isfinite(p)) or np.any(p < 0):
                raise ValueError('teacher probabilities must be finite and '
                                 'non-negative')
            if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-9):
                raise ValueError('teacher probabilities must sum to 1 per '
                                 'sample')

        y = self.labels
        if need_labels and y is None:
            raise ValueError('labels are required')
        if y is not None:
            if y.shape != (z.shape[0],):
                raise ValueError('labels shape {0} does not match batch size '
                                 '{1}'.format(y.shape, z.shape[0]))
            if np.any(y < 0) or np.any(y >= z.shape[1]):
                raise ValueError('labels out of range [0, {0})'.format(
                    z.shape[1]))
        return self


def distributional_loss(inputs):
    """
    Batch mean of KL(p_teacher || p_student).

    Computed in log space from the student logits::

        L = (1/n) sum_i sum_c p_R[i, c] * (log p_R[i, c] - log p_B[i, c])

    Returns
    -------
    float
        Non-negative.
    """
    inputs.validate(need_teacher=True)
    p = inputs.teacher_probabilities
    log_pb = log_softmax(inputs.student_logits)
    kl = special.rel_entr(p, 1.0).sum() - (p * log_pb).sum()
    return max(float(kl) / inputs.n, 0.0)


def distributional_loss_backward(inputs):
    """
    Gradient with respect to the student logits: ``(p_B - p_R) / n``.
    """
    inputs.validate(need_teacher=True)
    return (softmax(inputs.student_logits) -
            inputs.teacher_probabilities) / inputs.n


def cross_entropy(inputs):
    """Batch mean of ``-log p_B[i, label_i]``."""
    inputs.validate(need_labels=True)
    log_pb = log_softmax(inputs.student_logits)
    return float(-log_pb[np.arange(inputs.n), inputs.labels].mean())


def cross_entropy_backward(inputs):
    inputs.validate(need_labels=True)
    grad = softmax(inputs.student_logits)
    grad[np.arange(inputs.n), inputs.labels] -= 1.0
    return grad / inputs.n


def compute_loss(inputs, kind='distributional'):
    """
    Loss value and gradient with respect to the student logits.

    Parameters
    ----------
    inputs : `LossInputs`
    kind : {'distributional', 'cross-entropy'}

    Returns
    -------
    loss : float
    grad : 2d array
    """
    if kind == 'distributional':
        return (distributional_loss(inputs),
                distributional_loss_backward(inputs))
    if kind == 'cross-entropy':
        return cross_entropy(inputs), cross_entropy_backward(inputs)
    raise ValueError('unknown loss {0!r}; choose from {1}'.format(
        kind, ', '.join(LOSS_KINDS)))
