from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import ParamStore, Tensor, glorot_uniform
from ..autodiff import ops
from .config import DecoderConfig


class Decoder:
    """Common plumbing: parameter registration and the output nonlinearity.

    Subclasses implement ``_raw(coords, latent, embedding)`` returning the
    head's linear output of shape (instances, samples, out_dim).
    """

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator,
                 store: ParamStore | None = None, prefix: str = "decoder"):
        self.cfg = cfg
        self.store = store if store is not None else ParamStore()
        self.prefix = prefix
        self._rng = rng
        self._names: list[str] = []
        self.build()
        del self._rng

    def build(self) -> None:
        raise NotImplementedError

    def param(self, name: str, value) -> Tensor:
        full = f"{self.prefix}.{name}"
        self._names.append(full)
        return self.store.add(full, value)

    def linear(self, name: str, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
        w = self.param(f"{name}.w", glorot_uniform(self._rng, fan_in, fan_out))
        b = self.param(f"{name}.b", np.zeros(fan_out))
        return w, b

    def parameters(self) -> list[Tensor]:
        return [self.store[n] for n in self._names]

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, coords, latent, embedding: Tensor | None = None) -> Tensor:
        """Field values for ``coords`` (I, S, in_dim) under per-instance ``latent``."""
        dt = self.store.dtype
        coords = coords if isinstance(coords, Tensor) else Tensor(np.asarray(coords, dtype=dt))
        latent = latent if isinstance(latent, Tensor) else Tensor(np.asarray(latent, dtype=dt))
        if coords.ndim != 3 or coords.shape[-1] != self.cfg.in_dim:
            raise ad.ShapeError(f"{self.cfg.family}: coords shape {coords.shape} does not "
                                f"end in in_dim {self.cfg.in_dim}")
        return field_activation(self._raw(coords, latent, embedding), self.cfg.output)

    def _raw(self, coords: Tensor, latent: Tensor, embedding: Tensor | None) -> Tensor:
        raise NotImplementedError

    def _flat_latent(self, latent: Tensor) -> Tensor:
        if latent.ndim == 3:
            latent = ops.reshape(latent, (latent.shape[0], -1))
        if latent.ndim != 2 or latent.shape[1] != self.cfg.latent_dim:
            raise ad.ShapeError(f"{self.cfg.family}: latent shape {latent.shape} does not "
                                f"match latent_dim {self.cfg.latent_dim}")
        return latent


def field_activation(raw: Tensor, output: str) -> Tensor:
    """Sigmoid on color channels; softplus on the density channel when present."""
    if output == "rgb":
        return ops.sigmoid(raw)
    rgb = ops.sigmoid(ops.getitem(raw, (Ellipsis, slice(0, 3))))
    sigma = ops.softplus(ops.getitem(raw, (Ellipsis, slice(3, 4))))
    return ops.concat([rgb, sigma], axis=-1)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ops.add(ops.matmul(x, w), b)
