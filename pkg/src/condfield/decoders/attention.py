from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor, ops
from .base import Decoder, dense


class AttentionDecoder(Decoder):
    """Cross-attention from an encoded-position query into a set of latent tokens.

    Each stage: layer-normalized query, multi-head cross-attention into the
    tokens (residual), then a residual block of ReLU dense layers. The stage
    output is the next stage's query state.
    """

    record_attention = False

    def build(self):
        cfg = self.cfg
        k, dk = cfg.width, cfg.key_dim
        token_dim = cfg.token_width + cfg.token_embed_dim
        self.inp = self.linear("input", cfg.in_dim, k)
        self.stages = []
        for s in range(cfg.stages):
            st = {
                "ln_g": self.param(f"stage{s}.ln.g", np.ones(k)),
                "ln_b": self.param(f"stage{s}.ln.b", np.zeros(k)),
                "q": self.linear(f"stage{s}.q", k, dk),
                "k": self.linear(f"stage{s}.k", token_dim, dk),
                "v": self.linear(f"stage{s}.v", token_dim, dk),
                "o": self.linear(f"stage{s}.o", dk, k),
                "dense": [self.linear(f"stage{s}.dense{j}", k, k) for j in range(cfg.dense_per_stage)],
            }
            self.stages.append(st)
        self.head = self.linear("head", k, cfg.out_dim)
        self.attention_maps: list[np.ndarray] = []

    def tokens(self, latent: Tensor, embedding: Tensor | None) -> Tensor:
        cfg = self.cfg
        if latent.ndim == 2:
            if latent.shape[1] != cfg.latent_dim:
                raise ad.ShapeError(f"attention: latent shape {latent.shape} does not match "
                                    f"latent_dim {cfg.latent_dim}")
            latent = ops.reshape(latent, (latent.shape[0], -1, cfg.token_width))
        if latent.ndim != 3 or latent.shape[-1] != cfg.token_width:
            raise ad.ShapeError(f"attention: token shape {latent.shape} does not match "
                                f"token_width {cfg.token_width}")
        if cfg.token_embed_dim:
            if embedding is None or embedding.shape != (latent.shape[1], cfg.token_embed_dim):
                raise ad.ShapeError("attention: token embedding missing or mis-shaped")
            n, p = latent.shape[:2]
            emb = ops.broadcast_to(ops.reshape(embedding, (1, p, -1)), (n, p, cfg.token_embed_dim))
            latent = ops.concat([latent, emb], axis=-1)
        return latent

    def _raw(self, coords: Tensor, latent: Tensor, embedding) -> Tensor:
        cfg = self.cfg
        toks = self.tokens(latent, embedding)
        n, s = coords.shape[:2]
        if toks.shape[0] != n:
            raise ValueError(f"attention: {toks.shape[0]} token sets for {n} instances")
        p = toks.shape[1]
        nh, dh = cfg.heads, cfg.key_dim // cfg.heads
        scale = 1.0 / np.sqrt(dh)
        self.attention_maps = []
        h = dense(coords, *self.inp)
        for st in self.stages:
            q = dense(ops.layer_norm(h, st["ln_g"], st["ln_b"]), *st["q"])
            q = ops.transpose(ops.reshape(q, (n, s, nh, dh)), (0, 2, 1, 3))        # n,h,s,d
            kk = ops.transpose(ops.reshape(dense(toks, *st["k"]), (n, p, nh, dh)), (0, 2, 3, 1))  # n,h,d,p
            vv = ops.transpose(ops.reshape(dense(toks, *st["v"]), (n, p, nh, dh)), (0, 2, 1, 3))  # n,h,p,d
            attn = ops.softmax(ops.scale(ops.matmul(q, kk), scale), axis=-1)       # n,h,s,p
            if self.record_attention:
                self.attention_maps.append(attn.data)
            o = ops.reshape(ops.transpose(ops.matmul(attn, vv), (0, 2, 1, 3)), (n, s, cfg.key_dim))
            h = ops.add(h, dense(o, *st["o"]))
            u = h
            last = len(st["dense"]) - 1
            for j, (w, b) in enumerate(st["dense"]):
                u = dense(u, w, b)
                if j < last:
                    u = ops.relu(u)
            h = ops.add(h, u)
        return dense(h, *self.head)
