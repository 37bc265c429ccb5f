from __future__ import annotations

import hashlib
import threading

import numpy as np

from ..autodiff import Tensor, glorot_uniform, grad_enabled, ops
from .base import Decoder, dense
from .config import hyper_input_dim, hyper_predicted_count, primary_layer_dims


class HyperDecoder(Decoder):
    """A secondary MLP maps each latent to every weight and bias of a primary MLP.

    The final bias of the secondary network starts at a Glorot draw of the
    primary weights, so an all-zero latent already decodes through a usable
    MLP. With ``cache=True`` and gradients disabled, predicted parameters are
    memoized per (latent, embedding, parameter version).
    """

    def __init__(self, *args, cache: bool = False, **kwargs):
        self.cache_enabled = cache
        self._cache: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()
        self.psi_evaluations = 0
        super().__init__(*args, **kwargs)

    def build(self):
        cfg = self.cfg
        self.primary_dims = primary_layer_dims(cfg)
        n_pred = hyper_predicted_count(cfg)
        dims = [hyper_input_dim(cfg)] + [cfg.hyper_width] * (cfg.hyper_depth - 1)
        self.psi = [self.linear(f"psi{i}", a, b) for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]
        w_last = self.param(f"psi{len(self.psi)}.w", glorot_uniform(self._rng, dims[-1], n_pred))
        init = np.concatenate([np.concatenate([glorot_uniform(self._rng, i, o).ravel(), np.zeros(o)])
                               for i, o in self.primary_dims])
        b_last = self.param(f"psi{len(self.psi)}.b", init)
        self.psi.append((w_last, b_last))

    def psi_input(self, latent: Tensor, embedding: Tensor | None) -> Tensor:
        z = self._flat_latent(latent)
        if self.cfg.token_embed_dim:
            if embedding is None:
                raise ValueError("hyper: decoder configured with token embeddings but none given")
            n, p = z.shape[0], self.cfg.num_tokens
            tokens = ops.reshape(z, (n, p, self.cfg.token_width))
            emb = ops.broadcast_to(ops.reshape(embedding, (1, p, -1)), (n, p, embedding.shape[-1]))
            z = ops.reshape(ops.concat([tokens, emb], axis=-1), (n, -1))
        return z

    def predict_params(self, latent: Tensor, embedding: Tensor | None = None) -> Tensor:
        """Flat primary-network parameters, shape (instances, predicted count)."""
        x = self.psi_input(latent, embedding)
        if self.cache_enabled and not grad_enabled():
            return self._cached(x)
        return self._run_psi(x)

    def _run_psi(self, x: Tensor) -> Tensor:
        self.psi_evaluations += x.shape[0]
        last = len(self.psi) - 1
        for i, (w, b) in enumerate(self.psi):
            x = dense(x, w, b)
            if i < last:
                x = ops.relu(x)
        return x

    def _cached(self, x: Tensor) -> Tensor:
        rows = []
        for row in x.data:
            key = (hashlib.sha1(np.ascontiguousarray(row).tobytes()).hexdigest(), self.store.version)
            hit = self._cache.get(key)
            if hit is None:
                hit = self._run_psi(Tensor(row[None])).data[0]
                with self._lock:
                    self._cache.setdefault(key, hit)
            rows.append(hit)
        return Tensor(np.stack(rows))

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def _raw(self, coords: Tensor, latent: Tensor, embedding) -> Tensor:
        flat = self.predict_params(latent, embedding)
        n = coords.shape[0]
        if flat.shape[0] != n:
            raise ValueError(f"hyper: {flat.shape[0]} latents for {n} instances")
        h = coords
        offset = 0
        last = len(self.primary_dims) - 1
        for i, (fi, fo) in enumerate(self.primary_dims):
            w = ops.reshape(ops.getitem(flat, (slice(None), slice(offset, offset + fi * fo))), (n, fi, fo))
            offset += fi * fo
            b = ops.reshape(ops.getitem(flat, (slice(None), slice(offset, offset + fo))), (n, 1, fo))
            offset += fo
            h = ops.add(ops.matmul(h, w), b)
            if i < last:
                h = ops.relu(h)
        return h
