"""
Checksummed binary container used for datasets and weight checkpoints.

Layout::

    b'SBD1' | u32 header length | UTF-8 JSON header | float64 LE blocks | 8-byte checksum

The header lists the blocks as ``[{"name": ..., "shape": [...]}]`` in file
order. The checksum is an 8-byte BLAKE2b digest of every preceding byte.
"""

import hashlib
import json
import os
import struct

import numpy as np

from src.errors import ChecksumError, DatasetIOError

MAGIC = b'SBD1'
CHECKSUM_SIZE = 8


def _digest(payload):
    return hashlib.blake2b(payload, digest_size=CHECKSUM_SIZE).digest()


def encode_container(header, blocks):
    """Serialize ``header`` (JSON-able dict) and named float64 ``blocks`` to bytes."""
    header = dict(header)
    arrays = []
    layout = []
    for name, array in blocks.items():
        array = np.ascontiguousarray(array, dtype='<f8')
        arrays.append(array)
        layout.append({'name': name, 'shape': list(array.shape)})
    header['blocks'] = layout
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    payload = b''.join([MAGIC, struct.pack('<I', len(header_bytes)), header_bytes]
                       + [a.tobytes() for a in arrays])
    return payload + _digest(payload)


def decode_container(raw, source='<bytes>'):
    """Inverse of encode_container; returns ``(header, blocks)``."""
    if len(raw) < len(MAGIC) + 4 + CHECKSUM_SIZE or raw[:4] != MAGIC:
        raise DatasetIOError(f'{source}: not a stressbd container or truncated')
    payload, checksum = raw[:-CHECKSUM_SIZE], raw[-CHECKSUM_SIZE:]
    if _digest(payload) != checksum:
        raise ChecksumError(f'{source}: checksum mismatch (file corrupted)')

    (header_len,) = struct.unpack('<I', payload[4:8])
    offset = 8 + header_len
    if offset > len(payload):
        raise DatasetIOError(f'{source}: truncated header')
    try:
        header = json.loads(payload[8:offset].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetIOError(f'{source}: unreadable header: {exc}') from exc

    blocks = {}
    for entry in header.get('blocks', []):
        shape = tuple(entry['shape'])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(payload):
            raise DatasetIOError(f'{source}: truncated block {entry["name"]!r}')
        blocks[entry['name']] = np.frombuffer(payload[offset:end], dtype='<f8').astype(np.float64).reshape(shape)
        offset = end
    if offset != len(payload):
        raise DatasetIOError(f'{source}: {len(payload) - offset} unexpected trailing bytes')
    return header, blocks


def write_container(path, header, blocks):
    data = encode_container(header, blocks)
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, 'wb') as handle:
            handle.write(data)
    except OSError as exc:
        raise DatasetIOError(f'cannot write {path}: {exc}') from exc
    return path


def read_container(path):
    try:
        with open(path, 'rb') as handle:
            raw = handle.read()
    except OSError as exc:
        raise DatasetIOError(f'cannot read {path}: {exc}') from exc
    return decode_container(raw, source=str(path))
