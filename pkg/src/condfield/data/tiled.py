"""Tiled MNIST: grids of digits with a controlled number of unique digits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TiledMnistSpec:
    """``unique`` digits per image, each repeated over a contiguous square block of cells."""

    pool: np.ndarray = field(repr=False)
    grid: int = 16
    glyph: int = 16
    unique: int = 16
    seed: int = 0

    def __post_init__(self):
        self.pool = np.asarray(self.pool, dtype=np.float64)
        if self.pool.ndim != 3 or len(self.pool) == 0:
            raise ValueError("digit pool is empty")
        if self.pool.shape[1:] != (self.glyph, self.glyph):
            raise ValueError(f"pool glyphs are {self.pool.shape[1:]}, expected {self.glyph}x{self.glyph}")
        side = math.isqrt(self.unique)
        if side * side != self.unique or self.grid % side:
            raise ValueError(f"unique={self.unique} must be a square whose root divides grid={self.grid}")

    @property
    def block(self) -> int:
        """Side length, in cells, of each repeated-digit block."""
        return self.grid // math.isqrt(self.unique)

    @property
    def size(self) -> int:
        return self.grid * self.glyph


def digit_layout(spec: TiledMnistSpec, index: int, stream: int = 0) -> np.ndarray:
    """(grid, grid) pool indices for image ``index`` of ``stream``."""
    rng = np.random.default_rng([spec.seed, stream, index])
    side = math.isqrt(spec.unique)
    picks = rng.integers(0, len(spec.pool), size=(side, side))
    return np.repeat(np.repeat(picks, spec.block, axis=0), spec.block, axis=1)


def make_tiled_mnist(spec: TiledMnistSpec, index: int, stream: int = 0) -> np.ndarray:
    """Grayscale (size, size) image; a pure function of (seed, stream, index)."""
    layout = digit_layout(spec, index, stream)
    g, s = spec.grid, spec.glyph
    tiles = spec.pool[layout]                       # g, g, s, s
    return tiles.transpose(0, 2, 1, 3).reshape(g * s, g * s)


def tiled_batch(spec: TiledMnistSpec, indices, stream: int = 0) -> np.ndarray:
    """(B, size, size, 3) gray images replicated over RGB."""
    imgs = np.stack([make_tiled_mnist(spec, int(i), stream) for i in indices])
    return np.repeat(imgs[..., None], 3, axis=-1)
