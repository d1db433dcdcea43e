# -*- coding: utf-8 -*-
"""
Desk-scale datasets: MNIST (IDX files) and CIFAR-10 (binary batches).

Images come out as float64 NCHW arrays normalized per channel with the mean
and standard deviation of the training split. MNIST digits are zero-padded
from 28x28 to 32x32 so both datasets feed the same desk networks.
"""

import gzip
import os

import numpy as np
from astropy import log

__all__ = ['DataFormatError', 'Dataset', 'read_idx', 'read_cifar10_batch',
           'load_mnist', 'load_cifar10', 'load_dataset', 'DATASET_KINDS']

DATASET_KINDS = ('mnist', 'cifar10')

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR10_RECORD = 3073

MNIST_FILES = {'train': ('train-images-idx3-ubyte', 'train-labels-idx1-ubyte'),
               'test': ('t10k-images-idx3-ubyte', 't10k-labels-idx1-ubyte')}
CIFAR10_FILES = {'train': ['data_batch_{0}.bin'.format(i)
                           for i in range(1, 6)],
                 'test': ['test_batch.bin']}


class DataFormatError(ValueError):
    """A dataset file has a bad header, bad contents or is truncated."""


class Dataset(object):
    """
    Images and integer labels.

    Parameters
    ----------
    images : 4d array, NCHW
    labels : 1d int array
    name : str, optional
    mean, std : 1d arrays, optional
        Per-channel normalization constants already applied to ``images``.
    """

    def __init__(self, images, labels, name='', mean=None, std=None):
        images = np.asarray(images, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim != 4 or labels.shape != (images.shape[0],):
            raise ValueError('images must be NCHW and labels one per image; '
                             'got {0} and {1}'.format(images.shape,
                                                      labels.shape))
        self.images = images
        self.labels = labels
        self.name = name
        self.mean = mean
        self.std = std

    def __len__(self):
        return self.images.shape[0]

    @property
    def sample_shape(self):
        return self.images.shape[1:]

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, n):
        """The first ``n`` samples."""
        return Dataset(self.images[:n], self.labels[:n], self.name,
                       self.mean, self.std)

    def normalized(self, mean, std):
        """Copy normalized per channel with the given constants."""
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        images = (self.images - mean.reshape(1, -1, 1, 1)) / \
            std.reshape(1, -1, 1, 1)
        return Dataset(images, self.labels, self.name, mean, std)

    def channel_stats(self):
        mean = self.images.mean(axis=(0, 2, 3))
        std = self.images.std(axis=(0, 2, 3))
        return mean, np.where(std > 0, std, 1.0)

    def batches(self, batch_size, rng=None, augment=False):
        """
        One pass over the data in mini-batches.

        Parameters
        ----------
        batch_size : int
        rng : `numpy.random.Generator`, optional
            Shuffles the samples (and drives augmentation). Without it the
            samples come in order.
        augment : bool, optional
            Random 4-pixel-padded crop and horizontal flip.

        Yields
        ------
        images, labels
        """
        if batch_size < 1:
            raise ValueError('batch_size must be positive')
        order = (rng.permutation(len(self)) if rng is not None
                 else np.arange(len(self)))
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            x = self.images[idx]
            if augment:
                if rng is None:
                    raise ValueError('augmentation needs an rng')
                x = _crop_and_flip(x, rng)
            yield x, self.labels[idx]


def _crop_and_flip(x, rng, pad=4):
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(x)
    dy = rng.integers(0, 2 * pad + 1, size=n)
    dx = rng.integers(0, 2 * pad + 1, size=n)
    flip = rng.random(n) < 0.5
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out


def _read_bytes(filename):
    if not os.path.exists(filename) and os.path.exists(filename + '.gz'):
        filename = filename + '.gz'
    if not os.path.exists(filename):
        raise FileNotFoundError('no such dataset file: {0}'.format(filename))
    with open(filename, 'rb') as f:
        raw = f.read()
    if raw[:2] == b'\x1f\x8b':
        raw = gzip.decompress(raw)
    return raw


def read_idx(filename, magic):
    """
    Read an IDX file of unsigned bytes.

    Parameters
    ----------
    filename : str
        Path, optionally gzip-compressed (``.gz`` is tried when the plain
        name does not exist).
    magic : int
        Expected magic number: 0x00000803 for images, 0x00000801 for
        labels.

    Returns
    -------
    array of uint8, shaped by the header dimensions

    Raises
    ------
    DataFormatError
        Wrong magic number or a body shorter or longer than the header
        announces.
    """
    raw = _read_bytes(filename)
    if len(raw) < 4:
        raise DataFormatError('{0}: truncated header'.format(filename))
    found = int.from_bytes(raw[:4], 'big')
    if found != magic:
        raise DataFormatError('{0}: bad magic number 0x{1:08x}, expected '
                              '0x{2:08x}'.format(filename, found, magic))
    ndim = magic & 0xff
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError('{0}: truncated header'.format(filename))
    dims = tuple(int(d) for d in np.frombuffer(raw[4:header], dtype='>u4'))
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise DataFormatError('{0}: header announces {1} bytes of data, file '
                              'holds {2}'.format(filename, size,
                                                 len(raw) - header))
    return np.frombuffer(raw[header:], dtype=np.uint8).reshape(dims)


def read_cifar10_batch(filename):
    """
    Read a CIFAR-10 binary batch: 3073-byte records of one label byte and
    3072 RGB bytes (channel-major 3x32x32).

    Returns
    -------
    images : 4d uint8 array (n, 3, 32, 32)
    labels : 1d uint8 array (n,)
    """
    raw = _read_bytes(filename)
    if not raw or len(raw) % CIFAR10_RECORD:
        raise DataFormatError('{0}: {1} bytes is not a whole number of '
                              '{2}-byte records'.format(filename, len(raw),
                                                        CIFAR10_RECORD))
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)
    labels = records[:, 0]
    if labels.max() > 9:
        raise DataFormatError('{0}: label {1} out of range 0-9'.format(
            filename, int(labels.max())))
    return records[:, 1:].reshape(-1, 3, 32, 32), labels


def _mnist_split(path, split):
    images_name, labels_name = MNIST_FILES[split]
    images = read_idx(os.path.join(path, images_name), IDX_IMAGES_MAGIC)
    labels = read_idx(os.path.join(path, labels_name), IDX_LABELS_MAGIC)
    if images.ndim != 3:
        raise DataFormatError('{0}: expected 3 image dimensions, got '
                              '{1}'.format(images_name, images.ndim))
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError('{0} images but {1} labels in the {2} '
                              'split'.format(images.shape[0], labels.shape[0],
                                             split))
    h, w = images.shape[1:]
    pad_h, pad_w = max(32 - h, 0), max(32 - w, 0)
    images = np.pad(images[:, None], ((0, 0), (0, 0),
                                      (pad_h // 2, pad_h - pad_h // 2),
                                      (pad_w // 2, pad_w - pad_w // 2)))
    return Dataset(images / 255.0, labels, 'mnist-' + split)


def _normalize_splits(train, test):
    mean, std = train.channel_stats()
    return train.normalized(mean, std), test.normalized(mean, std)


def load_mnist(path):
    """
    Load MNIST from a directory holding the four IDX files (optionally
    gzipped).

    Returns
    -------
    train, test : `Dataset`
        1x32x32 images normalized with the training-split statistics.
    """
    train = _mnist_split(path, 'train')
    test = _mnist_split(path, 'test')
    log.info('load_mnist: {0} train / {1} test images from {2}'.format(
        len(train), len(test), path))
    return _normalize_splits(train, test)


def load_cifar10(path):
    """
    Load CIFAR-10 from a directory holding ``data_batch_1.bin`` ..
    ``data_batch_5.bin`` and ``test_batch.bin``. Missing training batches
    are skipped with a warning as long as one is present.

    Returns
    -------
    train, test : `Dataset`
    """
    splits = {}
    for split, names in CIFAR10_FILES.items():
        images, labels = [], []
        for name in names:
            filename = os.path.join(path, name)
            if split == 'train' and not (os.path.exists(filename) or
                                         os.path.exists(filename + '.gz')):
                log.warning('load_cifar10: {0} not found, '
                            'skipping'.format(filename))
                continue
            x, y = read_cifar10_batch(filename)
            images.append(x)
            labels.append(y)
        if not images:
            raise FileNotFoundError('no CIFAR-10 {0} batches in {1}'.format(
                split, path))
        splits[split] = Dataset(np.concatenate(images) / 255.0,
                                np.concatenate(labels), 'cifar10-' + split)
    log.info('load_cifar10: {0} train / {1} test images from {2}'.format(
        len(splits['train']), len(splits['test']), path))
    return _normalize_splits(splits['train'], splits['test'])


def load_dataset(kind, path):
    """
    Dispatch to `load_mnist` or `load_cifar10`.
    """
    if kind == 'mnist':
        return load_mnist(path)
    if kind == 'cifar10':
        return load_cifar10(path)
    raise ValueError('unknown dataset kind {0!r}; choose from {1}'.format(
        kind, ', '.join(DATASET_KINDS)))
