"""
Binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes  b'CROPLAB\\0'
    version    u32
    count      u32
    count x entry:
        name_len u16, name utf-8
        ndim     u8,  dims u32 * ndim
        data     float32 LE, row-major

Entries are ``param/<name>``, ``adam_m/<name>``, ``adam_v/<name>`` and ``meta/<key>``.
"""

import logging
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, List, Optional

import numpy as np

from croplab.errors import InvalidInputError
from .params import DenoiserParams, ModelDims
from .training import AdamState

MAGIC = b'CROPLAB\x00'
FORMAT_VERSION = 1
_DIM_KEYS = ('d_model', 'grid', 'image_size', 'vocab_size', 'n_steps', 'prompt_length')


@dataclass
class Checkpoint:
    params: DenoiserParams
    state: Optional[AdamState] = None
    epoch: int = 0
    loss_curve: List[float] = field(default_factory=list)


def _write_array(stream: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode('utf-8')
    array = np.ascontiguousarray(array, dtype='<f4')
    stream.write(struct.pack('<H', len(encoded)))
    stream.write(encoded)
    stream.write(struct.pack('<B', array.ndim))
    stream.write(struct.pack(f'<{array.ndim}I', *array.shape))
    stream.write(array.tobytes())


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise InvalidInputError("Checkpoint is truncated")
    return data


def _read_array(stream: BinaryIO):
    (name_len,) = struct.unpack('<H', _read_exact(stream, 2))
    name = _read_exact(stream, name_len).decode('utf-8')
    (ndim,) = struct.unpack('<B', _read_exact(stream, 1))
    shape = struct.unpack(f'<{ndim}I', _read_exact(stream, 4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(_read_exact(stream, 4 * count), dtype='<f4').reshape(shape)
    return name, data.astype(np.float32)


def save_checkpoint(path: str, params: DenoiserParams, state: Optional[AdamState] = None,
                    epoch: int = 0, loss_curve: Optional[List[float]] = None) -> str:
    """Write parameters (and optionally optimizer state) to ``path``."""
    entries: Dict[str, np.ndarray] = {
        'meta/dims': np.array([getattr(params.dims, k) for k in _DIM_KEYS], dtype=np.float32),
        'meta/epoch': np.array([epoch], dtype=np.float32),
        'meta/loss_curve': np.array(loss_curve or [], dtype=np.float32),
    }
    for name, array in params.arrays().items():
        entries[f'param/{name}'] = array
    if state is not None:
        entries['meta/adam_step'] = np.array([state.step], dtype=np.float32)
        for name in params.names():
            entries[f'adam_m/{name}'] = state.m[name]
            entries[f'adam_v/{name}'] = state.v[name]

    try:
        with open(path, 'wb') as stream:
            stream.write(MAGIC)
            stream.write(struct.pack('<II', FORMAT_VERSION, len(entries)))
            for name in sorted(entries):
                _write_array(stream, name, entries[name])
        logging.info(f"Saved checkpoint with {len(entries)} arrays to {path}")
        return path
    except OSError as e:
        logging.error(f"Error writing checkpoint {path}: {e}")
        raise


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        InvalidInputError: On a wrong magic string, unknown version or truncated file
    """
    with open(path, 'rb') as stream:
        if _read_exact(stream, len(MAGIC)) != MAGIC:
            raise InvalidInputError(f"{path} is not a croplab checkpoint")
        version, count = struct.unpack('<II', _read_exact(stream, 8))
        if version != FORMAT_VERSION:
            raise InvalidInputError(f"Unsupported checkpoint version {version}")
        entries = dict(_read_array(stream) for _ in range(count))

    if 'meta/dims' not in entries:
        raise InvalidInputError(f"{path} has no model dimensions")
    dims = ModelDims(**{k: int(v) for k, v in zip(_DIM_KEYS, entries['meta/dims'])})
    params = DenoiserParams.from_arrays(
        dims, {name[len('param/'):]: a for name, a in entries.items() if name.startswith('param/')})

    state = None
    if 'meta/adam_step' in entries:
        state = AdamState(
            {n: entries[f'adam_m/{n}'] for n in params.names()},
            {n: entries[f'adam_v/{n}'] for n in params.names()},
            int(entries['meta/adam_step'][0]),
        )
    epoch = int(entries['meta/epoch'][0]) if 'meta/epoch' in entries else 0
    loss_curve = [float(x) for x in entries.get('meta/loss_curve', [])]
    logging.info(f"Loaded checkpoint {path} (epoch {epoch}, {params.count()} weights)")
    return Checkpoint(params, state, epoch, loss_curve)
