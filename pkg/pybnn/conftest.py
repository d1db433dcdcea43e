# This file configures pytest for the pybnn test suite: shared fixtures
# for random generators and small synthetic datasets on disk.

import os

import numpy as np
import pytest


def write_idx(filename, array, magic):
    """Write ``array`` (uint8) as an IDX file with the given magic number."""
    array = np.asarray(array, dtype=np.uint8)
    header = int(magic).to_bytes(4, 'big')
    header += np.asarray(array.shape, dtype='>u4').tobytes()
    with open(filename, 'wb') as f:
        f.write(header + array.tobytes())


def synthetic_digits(n, rng, classes=10, size=28):
    """
    Images with one bright 4x4 block whose position encodes the label,
    plus a little noise.
    """
    labels = rng.permutation(np.arange(n) % classes)
    images = rng.integers(0, 40, size=(n, size, size))
    for i, label in enumerate(labels):
        row, col = divmod(int(label), 4)
        y, x = 2 + 6 * row, 2 + 6 * col
        images[i, y:y + 4, x:x + 4] = 255
    return images.astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mnist_dir(tmp_path):
    """A directory holding a small MNIST-format dataset (96 train, 32 test)."""
    gen = np.random.default_rng(7)
    for prefix, n in (('train', 96), ('t10k', 32)):
        images, labels = synthetic_digits(n, gen)
        write_idx(os.path.join(str(tmp_path), prefix + '-images-idx3-ubyte'),
                  images, 0x00000803)
        write_idx(os.path.join(str(tmp_path), prefix + '-labels-idx1-ubyte'),
                  labels, 0x00000801)
    return str(tmp_path)
