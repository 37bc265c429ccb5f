"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Graph, Tensor, backward


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn()`` with respect to ``x.data`` (mutated in place)."""
    g = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn().data.sum())
        flat[i] = orig - eps
        fm = float(fn().data.sum())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor],
                    eps: float = 1e-5) -> float:
    """Max relative error between analytic and numeric grads over ``inputs``."""
    for x in inputs:
        x.grad = None
    loss = fn()
    backward(Graph.trace(loss), loss, inputs)
    worst = 0.0
    for x in inputs:
        analytic = x.grad.astype(np.float64)
        worst = max(worst, relative_error(analytic, numerical_grad(fn, x, eps)))
    return worst
