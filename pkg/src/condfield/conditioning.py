"""Latent codes from an image encoder (auto-encoding) or a learnable table (auto-decoding)."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor, adam_step, glorot_uniform, ops
from .decoders.base import dense


@dataclass
class EncoderConfig:
    """CNN + patch tokenizer + one self-attention layer.

    ``channels`` lists the stride-2 conv stages; the last entry is the feature
    depth D. The feature map is M x M with M = image_size / 2**stages; it is
    cut into (M/patch)^2 = P patches of F = patch^2 * D features, which
    self-attention maps to P tokens of width G, giving N = P * G.
    """

    image_size: int = 256
    channels: tuple = (32, 64, 128, 128)
    patch: int = 1
    token_width: int = 128
    heads: int = 4

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if self.image_size % (2 ** len(self.channels)):
            raise ValueError("image_size must be divisible by 2**stages")
        if self.feature_size % self.patch:
            raise ValueError(f"patch {self.patch} does not tile a {self.feature_size}x"
                             f"{self.feature_size} feature map")
        if self.feature_dim % self.heads:
            raise ValueError("patch feature width must be divisible by heads")

    @property
    def feature_size(self) -> int:
        return self.image_size // 2 ** len(self.channels)

    @property
    def num_tokens(self) -> int:
        return (self.feature_size // self.patch) ** 2

    @property
    def feature_dim(self) -> int:
        return self.patch * self.patch * self.channels[-1]

    @property
    def latent_dim(self) -> int:
        return self.num_tokens * self.token_width

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


class ImageEncoder:
    """Maps (B, H, W, 3) images to (B, P, G) latent tokens."""

    def __init__(self, cfg: EncoderConfig, seed: int | np.random.Generator = 0,
                 store: ParamStore | None = None, prefix: str = "encoder"):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.cfg = cfg
        self.store = store if store is not None else ParamStore()
        self.prefix = prefix
        self._names: list[str] = []
        cin = 3
        self.convs = []
        for i, cout in enumerate(cfg.channels):
            w = self._add(f"conv{i}.w", glorot_uniform(rng, 9 * cin, 9 * cout, (3, 3, cin, cout)))
            b = self._add(f"conv{i}.b", np.zeros(cout))
            self.convs.append((w, b))
            cin = cout
        f = cfg.feature_dim
        # unit scale: the convolutions are translation-equivariant, so this is
        # the only thing telling tokens apart by location
        self.pos = self._add("pos", rng.standard_normal((cfg.num_tokens, f)))
        self.ln_g = self._add("ln.g", np.ones(f))
        self.ln_b = self._add("ln.b", np.zeros(f))
        self.attn = {n: (self._add(f"attn.{n}.w", glorot_uniform(rng, f, f)),
                         self._add(f"attn.{n}.b", np.zeros(f))) for n in ("q", "k", "v", "o")}
        self.out = (self._add("out.w", glorot_uniform(rng, f, cfg.token_width)),
                    self._add("out.b", np.zeros(cfg.token_width)))

    def _add(self, name, value) -> Tensor:
        full = f"{self.prefix}.{name}"
        self._names.append(full)
        return self.store.add(full, value)

    def parameters(self) -> list[Tensor]:
        return [self.store[n] for n in self._names]

    def __call__(self, images) -> Tensor:
        cfg = self.cfg
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.store.dtype))
        if x.ndim != 4 or x.shape[1:] != (cfg.image_size, cfg.image_size, 3):
            raise ValueError(f"encoder expects (B, {cfg.image_size}, {cfg.image_size}, 3) "
                             f"images, got {x.shape}")
        for w, b in self.convs:
            x = ops.relu(ops.conv2d(x, w, b, stride=2, padding=1))
        n, m, p = x.shape[0], cfg.feature_size, cfg.patch
        g = m // p
        x = ops.reshape(x, (n, g, p, g, p, cfg.channels[-1]))
        x = ops.reshape(ops.transpose(x, (0, 1, 3, 2, 4, 5)), (n, g * g, cfg.feature_dim))
        x = ops.add(x, self.pos)
        x = ops.add(x, self._self_attention(ops.layer_norm(x, self.ln_g, self.ln_b)))
        return dense(x, *self.out)

    def _self_attention(self, x: Tensor) -> Tensor:
        n, t, f = x.shape
        nh = self.cfg.heads
        dh = f // nh

        def heads(name, order):
            y = ops.reshape(dense(x, *self.attn[name]), (n, t, nh, dh))
            return ops.transpose(y, order)
        q = heads("q", (0, 2, 1, 3))
        k = heads("k", (0, 2, 3, 1))
        v = heads("v", (0, 2, 1, 3))
        a = ops.softmax(ops.scale(ops.matmul(q, k), 1.0 / np.sqrt(dh)), axis=-1)
        o = ops.reshape(ops.transpose(ops.matmul(a, v), (0, 2, 1, 3)), (n, t, f))
        return dense(o, *self.attn["o"])


def encode_image(images, encoder: ImageEncoder) -> Tensor:
    return encoder(images)


@dataclass
class RegularizerConfig:
    kind: str = "none"  # none | squared_norm
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "squared_norm"):
            raise ValueError(f"unknown regularizer {self.kind!r}")
        if self.weight < 0:
            raise ValueError("regularizer weight must be non-negative")

    def __call__(self, z: Tensor) -> Tensor | None:
        if self.kind == "none" or self.weight == 0:
            return None
        per_inst = ops.sum(ops.square(ops.reshape(z, (z.shape[0], -1))), axis=1)
        return ops.scale(ops.mean(per_inst), self.weight)


class LatentTable:
    """One zero-initialized latent row per training instance plus shared token embeddings."""

    def __init__(self, n_instances: int, latent_dim: int, token_width: int = 128,
                 embed_dim: int = 0, seed: int | np.random.Generator = 0,
                 store: ParamStore | None = None, prefix: str = "latent"):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        if embed_dim and latent_dim % token_width:
            raise ValueError("latent_dim must be a multiple of token_width to embed tokens")
        self.store = store if store is not None else ParamStore()
        self.n_instances = n_instances
        self.latent_dim = latent_dim
        self.token_width = token_width
        self.table = self.store.add(f"{prefix}.table", np.zeros((n_instances, latent_dim)), sparse=True)
        self.embedding = None
        if embed_dim:
            self.embedding = self.store.add(
                f"{prefix}.embedding", rng.standard_normal((latent_dim // token_width, embed_dim)))

    def lookup(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        bad = ids[(ids < 0) | (ids >= self.n_instances)]
        if bad.size:
            raise KeyError(f"unknown instance id {int(bad[0])}")
        return ops.take_rows(self.table, ids)


def mse(pred: Tensor, target) -> Tensor:
    target = ad.as_tensor(target, pred)
    return ops.mean(ops.square(ops.sub(pred, target)))


def autoencoder_loss(images, pixel_idx, coords, encoder: ImageEncoder, decoder) -> Tensor:
    """MSE between decoded and true colors at sampled pixels of each image.

    ``images`` is (B, H, W, 3); ``pixel_idx`` (B, S) flat pixel indices;
    ``coords`` (B, S, enc_dim) encoded pixel positions.
    """
    images = np.asarray(images)
    b = images.shape[0]
    target = images.reshape(b, -1, 3)[np.arange(b)[:, None], pixel_idx]
    tokens = encoder(images)
    return mse(decoder(coords, tokens), target)


PredictFn = Callable[[Tensor, "Tensor | None"], Tensor]


def autodecoder_loss(ids, targets, table: LatentTable, predict: PredictFn,
                     reg: RegularizerConfig | None = None) -> Tensor:
    """MSE of ``predict(z, embedding)`` against ``targets`` plus rho(z) for the batch rows."""
    z = table.lookup(ids)
    loss = mse(predict(z, table.embedding), targets)
    extra = reg(z) if reg is not None else None
    return loss if extra is None else ops.add(loss, extra)


def test_time_optimize(predict: PredictFn, targets, latent_dim: int, frozen: list[ParamStore],
                       embedding: Tensor | None = None, steps: int = 200, lr: float = 1e-2,
                       reg: RegularizerConfig | None = None, dtype=np.float32) -> np.ndarray:
    """Fit one latent (from zero) to ``targets`` with every store in ``frozen`` held fixed."""
    store = ParamStore(dtype)
    z = store.add("z", np.zeros((1, latent_dim)))
    saved = [{n: p.requires_grad for n, p in s.items()} for s in frozen]
    for s in frozen:
        s.requires_grad_(False)
    try:
        for _ in range(steps):
            loss = mse(predict(z, embedding), targets)
            extra = reg(z) if reg is not None else None
            if extra is not None:
                loss = ops.add(loss, extra)
            ad.backward(ad.Graph.trace(loss), loss, store)
            adam_step(store, lr)
    finally:
        for s, flags in zip(frozen, saved):
            for n, p in s.items():
                p.requires_grad = flags[n]
    return z.data[0].copy()


test_time_optimize.__test__ = False  # keep pytest from collecting it
