# -*- coding: utf-8 -*-
"""
Checkpoint files.

Layout (all integers little-endian)::

    b'RAKT'                  magic
    u32                      format version
    u32                      tensor count
    per tensor:
        u32 + bytes          name length, UTF-8 name
        u32                  rank
        u64 * rank           dimensions
        u8                   dtype tag
        bytes                raw little-endian data
    u32                      CRC32 of everything above

Everything that is not a parameter (step counter, RNG state, network
description, run configuration, Adam moments) is stored as a tensor under
a reserved name.
"""

import json
import os
import struct
import zlib
from collections import OrderedDict

import numpy as np
from astropy import log

__all__ = ['CheckpointError', 'Checkpoint', 'encode_checkpoint',
           'decode_checkpoint', 'save_checkpoint', 'load_checkpoint',
           'MAGIC', 'VERSION']

MAGIC = b'RAKT'
VERSION = 1

DTYPE_TAGS = OrderedDict([(0, np.dtype('<f8')), (1, np.dtype('<i8')),
                          (2, np.dtype('u1')), (3, np.dtype('<u8')),
                          (4, np.dtype('<f4'))])
_TAG_OF = {dt: tag for tag, dt in DTYPE_TAGS.items()}

META_STEP = '__meta__/step'
META_RNG = '__meta__/rng'
META_SPEC = '__meta__/spec'
META_CONFIG = '__meta__/config'
OPTIM_T = 'optim/t'
OPTIM_M = 'optim/m/'
OPTIM_V = 'optim/v/'


class CheckpointError(IOError):
    """Unreadable checkpoint: bad magic, unknown version, truncation or a
    checksum mismatch."""


class Checkpoint(object):
    """
    A snapshot of a training run.

    Parameters
    ----------
    params : dict
        Parameter and BN buffer arrays by name (see
        `~pybnn.arch.Network.state_dict`).
    step : int, optional
        Global training step.
    rng_state : dict, optional
        ``bit_generator.state`` of the run's `numpy.random.Generator`.
    spec_text : str, optional
        `~pybnn.arch.NetworkSpec.to_text` output.
    config_text : str, optional
        `~pybnn.train.TrainConfig.to_text` output.
    optimizer : dict, optional
        ``{'t': int, 'm': {name: array}, 'v': {name: array}}``.
    """

    def __init__(self, params, step=0, rng_state=None, spec_text='',
                 config_text='', optimizer=None):
        self.params = OrderedDict(params)
        self.step = int(step)
        self.rng_state = rng_state
        self.spec_text = spec_text
        self.config_text = config_text
        self.optimizer = optimizer

    def to_tensors(self):
        tensors = OrderedDict()
        tensors[META_STEP] = np.array(self.step, dtype=np.int64)
        if self.rng_state is not None:
            tensors[META_RNG] = _text_tensor(json.dumps(self.rng_state,
                                                        sort_keys=True))
        if self.spec_text:
            tensors[META_SPEC] = _text_tensor(self.spec_text)
        if self.config_text:
            tensors[META_CONFIG] = _text_tensor(self.config_text)
        for name, value in self.params.items():
            tensors[name] = np.asarray(value)
        if self.optimizer is not None:
            tensors[OPTIM_T] = np.array(self.optimizer['t'], dtype=np.int64)
            for name, value in self.optimizer['m'].items():
                tensors[OPTIM_M + name] = value
            for name, value in self.optimizer['v'].items():
                tensors[OPTIM_V + name] = value
        return tensors

    @classmethod
    def from_tensors(cls, tensors):
        tensors = OrderedDict(tensors)
        step = int(tensors.pop(META_STEP, 0))
        rng = tensors.pop(META_RNG, None)
        spec = tensors.pop(META_SPEC, None)
        config = tensors.pop(META_CONFIG, None)
        optimizer = None
        if OPTIM_T in tensors:
            optimizer = {'t': int(tensors.pop(OPTIM_T)),
                         'm': OrderedDict(), 'v': OrderedDict()}
        params = OrderedDict()
        for name, value in tensors.items():
            if optimizer is not None and name.startswith(OPTIM_M):
                optimizer['m'][name[len(OPTIM_M):]] = value
            elif optimizer is not None and name.startswith(OPTIM_V):
                optimizer['v'][name[len(OPTIM_V):]] = value
            else:
                params[name] = value
        return cls(params, step,
                   None if rng is None else json.loads(_tensor_text(rng)),
                   '' if spec is None else _tensor_text(spec),
                   '' if config is None else _tensor_text(config),
                   optimizer)


def _text_tensor(text):
    return np.frombuffer(text.encode('utf-8'), dtype=np.uint8).copy()


def _tensor_text(tensor):
    return np.asarray(tensor, dtype=np.uint8).tobytes().decode('utf-8')


def encode_checkpoint(checkpoint):
    """
    Serialize a `Checkpoint` to bytes.
    """
    tensors = checkpoint.to_tensors()
    chunks = [MAGIC, struct.pack('<II', VERSION, len(tensors))]
    for name, value in tensors.items():
        value = np.asarray(value)
        dtype = value.dtype.newbyteorder('<') if value.dtype.itemsize > 1 \
            else value.dtype
        if dtype not in _TAG_OF:
            raise TypeError('{0}: unsupported dtype {1}'.format(name,
                                                                value.dtype))
        raw_name = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack('<I', value.ndim))
        chunks.append(struct.pack('<{0}Q'.format(value.ndim), *value.shape))
        chunks.append(struct.pack('<B', _TAG_OF[dtype]))
        chunks.append(np.ascontiguousarray(value, dtype=dtype).tobytes())
    body = b''.join(chunks)
    return body + struct.pack('<I', zlib.crc32(body) & 0xffffffff)


class _Reader(object):

    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise CheckpointError('truncated checkpoint')
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(raw):
    """
    Parse bytes written by `encode_checkpoint`.

    Raises
    ------
    CheckpointError
    """
    if len(raw) < len(MAGIC) + 12:
        raise CheckpointError('truncated checkpoint')
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError('not a checkpoint (bad magic {0!r})'.format(
            raw[:len(MAGIC)]))
    body, (crc,) = raw[:-4], struct.unpack('<I', raw[-4:])
    reader = _Reader(body)
    reader.take(len(MAGIC))
    version, count = reader.unpack('<II')
    if version != VERSION:
        raise CheckpointError('unsupported checkpoint version {0} (this '
                              'build reads version {1})'.format(version,
                                                                VERSION))
    if zlib.crc32(body) & 0xffffffff != crc:
        raise CheckpointError('checksum mismatch; the file is corrupt or '
                              'truncated')

    tensors = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack('<I')
        name = reader.take(name_len).decode('utf-8')
        (rank,) = reader.unpack('<I')
        shape = reader.unpack('<{0}Q'.format(rank))
        (tag,) = reader.unpack('<B')
        if tag not in DTYPE_TAGS:
            raise CheckpointError('{0}: unknown dtype tag {1}'.format(name,
                                                                      tag))
        dtype = DTYPE_TAGS[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(reader.take(nbytes),
                                      dtype=dtype).reshape(shape).copy()
    if reader.pos != len(body):
        raise CheckpointError('trailing bytes after the last tensor')
    return Checkpoint.from_tensors(tensors)


def save_checkpoint(checkpoint, filename):
    """
    Write ``checkpoint`` to ``filename``.
    """
    raw = encode_checkpoint(checkpoint)
    directory = os.path.dirname(os.path.abspath(filename))
    os.makedirs(directory, exist_ok=True)
    with open(filename, 'wb') as f:
        f.write(raw)
    log.info('save_checkpoint: step {0}, {1} bytes -> {2}'.format(
        checkpoint.step, len(raw), filename))


def load_checkpoint(filename):
    """
    Read a checkpoint file.

    Raises
    ------
    FileNotFoundError
    CheckpointError
    """
    with open(filename, 'rb') as f:
        raw = f.read()
    checkpoint = decode_checkpoint(raw)
    log.debug('load_checkpoint: step {0} from {1}'.format(checkpoint.step,
                                                          filename))
    return checkpoint
