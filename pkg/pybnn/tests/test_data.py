import gzip
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ..conftest import synthetic_digits, write_idx
from ..data import (DataFormatError, Dataset, load_cifar10, load_dataset,
                    load_mnist, read_cifar10_batch, read_idx)


def test_load_mnist(mnist_dir):
    train, test = load_mnist(mnist_dir)
    assert len(train) == 96 and len(test) == 32
    assert train.sample_shape == (1, 32, 32)
    assert train.num_classes == 10
    assert_allclose(train.images.mean(), 0.0, atol=1e-9)
    assert_allclose(train.images.std(), 1.0, rtol=1e-9)
    # the test split uses the training statistics
    assert_allclose(test.mean, train.mean)


def test_read_idx_gzip(tmp_path, rng):
    images, _ = synthetic_digits(5, rng)
    plain = os.path.join(str(tmp_path), 'images')
    write_idx(plain, images, 0x803)
    with open(plain, 'rb') as f:
        raw = f.read()
    os.remove(plain)
    with open(plain + '.gz', 'wb') as f:
        f.write(gzip.compress(raw))
    assert_array_equal(read_idx(plain, 0x803), images)


def test_read_idx_bad_magic(tmp_path, rng):
    filename = os.path.join(str(tmp_path), 'labels')
    write_idx(filename, np.arange(4), 0x801)
    with pytest.raises(DataFormatError, match='magic'):
        read_idx(filename, 0x803)


def test_read_idx_truncated(tmp_path):
    filename = os.path.join(str(tmp_path), 'labels')
    write_idx(filename, np.arange(10), 0x801)
    with open(filename, 'rb') as f:
        raw = f.read()
    with open(filename, 'wb') as f:
        f.write(raw[:-3])
    with pytest.raises(DataFormatError):
        read_idx(filename, 0x801)


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mnist(str(tmp_path))
    with pytest.raises(FileNotFoundError):
        load_cifar10(str(tmp_path))
    with pytest.raises(ValueError):
        load_dataset('imagenet', str(tmp_path))


def write_cifar_batch(filename, n, rng, label_max=9):
    labels = rng.integers(0, label_max + 1, size=(n, 1))
    pixels = rng.integers(0, 256, size=(n, 3072))
    with open(filename, 'wb') as f:
        f.write(np.hstack([labels, pixels]).astype(np.uint8).tobytes())


def test_load_cifar10_with_missing_batches(tmp_path, rng):
    path = str(tmp_path)
    write_cifar_batch(os.path.join(path, 'data_batch_1.bin'), 6, rng)
    write_cifar_batch(os.path.join(path, 'test_batch.bin'), 4, rng)
    train, test = load_cifar10(path)
    assert len(train) == 6 and len(test) == 4
    assert train.sample_shape == (3, 32, 32)


def test_cifar10_bad_records(tmp_path, rng):
    filename = os.path.join(str(tmp_path), 'test_batch.bin')
    with open(filename, 'wb') as f:
        f.write(b'\x00' * 100)
    with pytest.raises(DataFormatError):
        read_cifar10_batch(filename)
    write_cifar_batch(filename, 2, rng)
    with open(filename, 'r+b') as f:
        f.write(b'\xc8')
    with pytest.raises(DataFormatError):
        read_cifar10_batch(filename)


def test_batches_cover_every_sample(rng):
    ds = Dataset(rng.normal(size=(10, 1, 4, 4)), np.arange(10))
    seen = np.concatenate([y for _, y in ds.batches(3, rng)])
    assert sorted(seen) == list(range(10))
    in_order = np.concatenate([y for _, y in ds.batches(4)])
    assert_array_equal(in_order, np.arange(10))


def test_augmentation_keeps_shape(rng):
    ds = Dataset(rng.normal(size=(5, 3, 8, 8)), np.zeros(5))
    x, _ = next(ds.batches(5, rng, augment=True))
    assert x.shape == (5, 3, 8, 8)
    with pytest.raises(ValueError):
        next(ds.batches(5, augment=True))


def test_dataset_shape_check():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 4, 4)), np.zeros(3))
