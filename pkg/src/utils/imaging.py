"""Binary 8-bit portable graymap (PGM) encoding of normalized stress images."""

import os

import numpy as np

from src.errors import DatasetIOError
from src.models.dataset import GRID_SIDE


def to_gray(image):
    """[0, 1] floats -> uint8, 0.0 black and 1.0 white."""
    values = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.rint(values * 255.0).astype(np.uint8)


def encode_pgm(image, side=GRID_SIDE):
    pixels = to_gray(image).reshape(side, -1)
    height, width = pixels.shape
    return f'P5\n{width} {height}\n255\n'.encode('ascii') + pixels.tobytes()


def decode_pgm(raw):
    parts = raw.split(b'\n', 3)
    if len(parts) != 4 or parts[0] != b'P5':
        raise DatasetIOError('not a binary PGM image')
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != width * height:
        raise DatasetIOError('truncated PGM image')
    return pixels.reshape(height, width)


def write_pgm(path, image, side=GRID_SIDE):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'wb') as handle:
            handle.write(encode_pgm(image, side))
    except OSError as exc:
        raise DatasetIOError(f'cannot write image {path}: {exc}') from exc
    return path
