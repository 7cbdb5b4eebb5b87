'''
The SFTF feature container, shared by every module that persists matrices.

Layout (little-endian): magic b"SFTF", u32 version (1), u32 rows, u32 cols,
then rows * cols float32 values in row-major order. F0 tracks are stored as
two columns (log_f0, voiced in {0, 1}); state sequences as one column of
integer-valued floats. Neural network weights are stored as a single row of
all parameters concatenated in state_dict order, next to a JSON header that
records names and shapes.
'''
import json
import os
import struct
from collections import OrderedDict

import numpy as np
import torch

from speech.errors import InvalidInput

MAGIC = b'SFTF'
VERSION = 1
_HEADER = struct.Struct('<4sIII')


def write_matrix(path, matrix):
    matrix = np.asarray(matrix, dtype='<f4')
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise InvalidInput('SFTF holds 2-D matrices, got shape {}'.format(matrix.shape))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    rows, cols = matrix.shape
    with open(path, 'wb') as f:
        f.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        f.write(np.ascontiguousarray(matrix).tobytes())


def read_matrix(path):
    with open(path, 'rb') as f:
        head = f.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise InvalidInput('{}: truncated SFTF header'.format(path))
        magic, version, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise InvalidInput('{}: not an SFTF file'.format(path))
        if version != VERSION:
            raise InvalidInput('{}: unsupported SFTF version {}'.format(path, version))
        data = np.frombuffer(f.read(), dtype='<f4')
    if data.size != rows * cols:
        raise InvalidInput('{}: expected {} values, found {}'.format(path, rows * cols, data.size))
    return data.reshape(rows, cols).astype(np.float32)


def save_module(module, stem, header=None):
    '''Write `<stem>.sftf` (flattened parameters) and `<stem>.json` (header).'''
    state = module.state_dict()
    names, shapes, chunks = [], [], []
    for name, tensor in state.items():
        names.append(name)
        shapes.append(list(tensor.shape))
        chunks.append(tensor.detach().cpu().to(torch.float32).reshape(-1).numpy())
    flat = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.float32)
    write_matrix(stem + '.sftf', flat[None, :])
    header = dict(header or {})
    header['parameters'] = [{'name': n, 'shape': s} for n, s in zip(names, shapes)]
    with open(stem + '.json', 'w') as f:
        json.dump(header, f, indent=2, sort_keys=True)


def read_header(stem):
    with open(stem + '.json') as f:
        return json.load(f)


def load_state(stem, header=None):
    '''Rebuild a state_dict from `<stem>.sftf` using the shapes in its header.'''
    header = header or read_header(stem)
    flat = read_matrix(stem + '.sftf').reshape(-1)
    state = OrderedDict()
    offset = 0
    for entry in header['parameters']:
        size = int(np.prod(entry['shape'])) if entry['shape'] else 1
        values = flat[offset:offset + size].reshape(entry['shape'])
        state[entry['name']] = torch.from_numpy(values.copy())
        offset += size
    if offset != flat.size:
        raise InvalidInput('{}: header describes {} values, file has {}'.format(stem, offset, flat.size))
    return state
