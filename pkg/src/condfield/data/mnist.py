"""MNIST IDX reading/writing and digit pools.

IDX image files are big-endian::

    [offset] [type]   [value]
    0000     u32      0x00000803 magic
    0004     u32      number of images
    0008     u32      rows
    0012     u32      columns
    0016     u8 * n   pixels, row-major
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

from .. import kernels

IDX_IMAGE_MAGIC = 0x00000803


class IdxFormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (at byte offset {offset})")
        self.offset = offset


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx_images(path: str | os.PathLike) -> np.ndarray:
    """Raw uint8 array of shape (n, rows, cols)."""
    buf = _read_bytes(path)
    if len(buf) < 16:
        raise IdxFormatError("truncated IDX header", len(buf))
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"bad IDX magic 0x{magic:08x}", 0)
    need = 16 + n * rows * cols
    if len(buf) < need:
        raise IdxFormatError(f"truncated IDX payload: expected {need} bytes, found {len(buf)}", len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols)


def write_idx_images(path: str | os.PathLike, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols) + images.tobytes())


def load_mnist_idx(path: str | os.PathLike, glyph: int = 16) -> np.ndarray:
    """Digits scaled to [0, 1] and area-averaged down to ``glyph`` x ``glyph``."""
    raw = read_idx_images(path).astype(np.float64) / 255.0
    if raw.shape[1:] == (glyph, glyph):
        return raw
    return kernels.area_resize(np.ascontiguousarray(raw), glyph, glyph)


def sklearn_digit_pool(glyph: int = 8) -> np.ndarray:
    """The 1797 8x8 handwritten digits bundled with scikit-learn, in [0, 1]."""
    from sklearn.datasets import load_digits

    imgs = load_digits().images.astype(np.float64) / 16.0
    if glyph == 8:
        return imgs
    return kernels.area_resize(np.ascontiguousarray(imgs), glyph, glyph)
