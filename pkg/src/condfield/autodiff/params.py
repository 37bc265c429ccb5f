"""Named parameter storage and the Adam update."""

from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from .tensor import Tensor


class MissingGradientError(RuntimeError):
    pass


class ParamStore:
    """Named trainable tensors with their Adam moments and step counter.

    Parameters registered with ``sparse=True`` (latent tables) are updated
    row-wise: only rows gathered since the last step move, and their moments
    are the only ones that decay.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.sparse: set[str] = set()
        self.t = 0
        self.version = 0

    def add(self, name: str, value, sparse: bool = False) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=self.dtype)
        p = Tensor(arr, requires_grad=True, name=name)
        self.params[name] = p
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        if sparse:
            self.sparse.add(name)
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
            p.touched_rows = None

    def requires_grad_(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name].data).tobytes())
        return h.hexdigest()


def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update of every parameter in ``store``; clears grads."""
    missing = [n for n, p in store.params.items() if p.grad is None]
    if missing:
        raise MissingGradientError(f"adam_step: no gradient for {missing}")
    store.t += 1
    bc1 = 1.0 - beta1 ** store.t
    bc2 = 1.0 - beta2 ** store.t
    dt = store.dtype.type
    b1, b2 = dt(beta1), dt(beta2)
    step = dt(lr / bc1)
    inv_bc2 = dt(1.0 / bc2)
    epsv = dt(eps)
    for name, p in store.params.items():
        g = p.grad.astype(store.dtype, copy=False)
        m, v = store.m[name], store.v[name]
        if name in store.sparse:
            rows = np.array(sorted(p.touched_rows or ()), dtype=np.int64)
            if rows.size:
                gr = g[rows]
                m[rows] = b1 * m[rows] + (1 - b1) * gr
                v[rows] = b2 * v[rows] + (1 - b2) * gr * gr
                p.data[rows] -= step * m[rows] / (np.sqrt(v[rows] * inv_bc2) + epsv)
        else:
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= step * m / (np.sqrt(v * inv_bc2) + epsv)
        p.grad = None
        p.touched_rows = None
    store.version += 1


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))
