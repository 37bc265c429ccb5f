from __future__ import annotations

import math

import numpy as np


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    err = float(np.mean((a - b) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def mean_psnr(preds, targets) -> float:
    return float(np.mean([psnr(p, t) for p, t in zip(preds, targets)]))
