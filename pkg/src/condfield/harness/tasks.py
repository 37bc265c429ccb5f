"""Task setups: data, models, per-step loss and held-out evaluation."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..autodiff import ParamStore, Tensor, no_grad, ops
from ..conditioning import (EncoderConfig, ImageEncoder, LatentTable, RegularizerConfig,
                            autodecoder_loss, autoencoder_loss)
from ..data import (TiledMnistSpec, generate_multiview, holdout_split, load_image,
                    load_mnist_idx, load_multiview, psnr, random_scene, sklearn_digit_pool,
                    tiled_batch)
from ..decoders import DecoderConfig, build_decoder, count_params
from ..encoding import PosEncConfig, camera_rays, positional_encode
from ..rendering import SampleSpec, lightfield_inputs, render_rays
from .spec import TABLE_TASKS, ExperimentSpec, choose_tokens, default_encoder_stages

IMAGE_SUFFIXES = (".png", ".ppm", ".pnm", ".jpg", ".jpeg")


def decoder_config(spec: ExperimentSpec, token_width: int | None = None) -> DecoderConfig:
    d = dict(spec.decoder)
    if "token_width" not in d:
        d["token_width"] = token_width or choose_tokens(spec.latent_dim)[1]
    if spec.task in TABLE_TASKS and d["family"] != "concat":
        # shared token embeddings give zero-initialized latents a gradient path
        d.setdefault("token_embed_dim", d["token_width"])
    in_dim = PosEncConfig(spec.pe_levels).out_dim(spec.coord_dim)
    output = "rgb_sigma" if spec.task == "nerf" else "rgb"
    return DecoderConfig(latent_dim=spec.latent_dim, in_dim=in_dim, output=output, **d)


def pixel_coords(h: int, w: int) -> np.ndarray:
    """(h*w, 2) pixel centers as (x, y) in [-1, 1], row-major."""
    ys, xs = np.mgrid[0:h, 0:w]
    return np.stack([(xs.ravel() + 0.5) / w * 2 - 1, (ys.ravel() + 0.5) / h * 2 - 1], axis=-1)


def sample_pixels(rng: np.random.Generator, n_images: int, n_pixels: int, count: int) -> np.ndarray:
    """(n_images, k) flat pixel indices; every pixel when ``count`` covers the image."""
    if count >= n_pixels:
        return np.broadcast_to(np.arange(n_pixels), (n_images, n_pixels)).copy()
    return np.stack([rng.choice(n_pixels, count, replace=False) for _ in range(n_images)])


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, 0xBA7C4])


# ---------------------------------------------------------------- image sources

class ImageSource:
    """Training and evaluation images for the 2D tasks.

    ``n_train`` None means an unbounded on-the-fly stream.
    """

    def __init__(self, ds: dict, seed: int, task: str):
        kind = ds["kind"]
        self.stream_spec = None
        if kind == "tiled_mnist":
            glyph = int(ds["glyph"])
            pool_src = ds.get("pool", "sklearn")
            pool = sklearn_digit_pool(glyph) if pool_src == "sklearn" else load_mnist_idx(pool_src, glyph)
            self.stream_spec = TiledMnistSpec(pool, grid=int(ds["grid"]), glyph=glyph,
                                              unique=int(ds["unique"]), seed=int(ds.get("seed", seed)))
            self.size = self.stream_spec.size
            self.n_train = ds.get("train_size")
            n_test = int(ds.get("test_size", 16))
            if task == "autodecode":
                if self.n_train is None:
                    raise ValueError("autodecode needs a finite dataset.train_size")
                self.test = self.train(np.arange(min(self.n_train, n_test)))
            else:
                self.test = tiled_batch(self.stream_spec, np.arange(n_test), stream=1)
        elif kind in ("image", "folder"):
            if kind == "image":
                paths = [Path(p) for p in np.atleast_1d(ds["path"])]
            else:
                paths = sorted(p for p in Path(ds["path"]).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
            if not paths:
                raise ValueError(f"no images found for dataset {ds}")
            self.images = np.stack([load_image(p) for p in paths])
            self.size = self.images.shape[1]
            if self.images.shape[1] != self.images.shape[2]:
                raise ValueError("images must be square")
            if task == "autoencode" and len(self.images) >= 10:
                tr, te = holdout_split(len(self.images), seed)
            else:
                tr = te = np.arange(len(self.images))
            self._train_ids, self.n_train = tr, len(tr)
            self.test = self.images[te]
        else:
            raise ValueError(f"unknown image dataset kind {kind!r}")

    def train(self, indices) -> np.ndarray:
        if self.stream_spec is not None:
            return tiled_batch(self.stream_spec, indices, stream=0)
        return self.images[self._train_ids[np.asarray(indices)]]

    def batch_indices(self, rng: np.random.Generator, step: int, count: int) -> np.ndarray:
        if self.n_train is None:
            return step * count + np.arange(count)
        if count >= self.n_train:
            return np.arange(self.n_train)
        return np.sort(rng.choice(self.n_train, count, replace=False))


# ---------------------------------------------------------------- tasks

class Task:
    spec: ExperimentSpec
    decoder_cfg: DecoderConfig
    stores: dict[str, ParamStore]
    lrs: dict[str, float]

    @property
    def param_count(self) -> int:
        return count_params(self.decoder_cfg)

    def loss(self, step: int) -> Tensor:
        raise NotImplementedError

    def evaluate(self) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
        """Mean held-out PSNR plus (prediction, target) image pairs."""
        raise NotImplementedError


class ImageTask(Task):
    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.src = ImageSource(spec.dataset, spec.seed, spec.task)
        n = self.src.size
        self.pe = PosEncConfig(spec.pe_levels)
        self.coords = positional_encode(pixel_coords(n, n), self.pe).astype(np.float32)
        self.dec_store = ParamStore()
        self.stores = {"decoder": self.dec_store}
        self.lrs = {"decoder": spec.lr_decoder}
        if spec.task == "autoencode":
            self._build_encoder(n)
        else:
            self.decoder_cfg = decoder_config(spec)
            self.decoder = build_decoder(self.decoder_cfg, seed=[spec.seed, 1], store=self.dec_store)
            self.lat_store = ParamStore()
            self.table = LatentTable(self.src.n_train, spec.latent_dim, self.decoder_cfg.token_width,
                                     self.decoder_cfg.token_embed_dim, seed=np.random.default_rng([spec.seed, 2]),
                                     store=self.lat_store)
            self.stores["latent"] = self.lat_store
            self.lrs["latent"] = spec.lr_latent
            self.reg = RegularizerConfig("squared_norm", spec.regularizer) if spec.regularizer else None

    def _build_encoder(self, n: int):
        spec = self.spec
        enc = dict(spec.encoder)
        stages = len(enc["channels"]) if "channels" in enc else default_encoder_stages(n)
        channels = tuple(enc.get("channels", [16] + [32] * (stages - 1)))
        side = n // 2 ** len(channels)
        tw = spec.decoder.get("token_width")
        if tw is None:
            p_count, tw = choose_tokens(spec.latent_dim, side)
        else:
            p_count = spec.latent_dim // tw
        root = math.isqrt(p_count)
        if root * root != p_count or spec.latent_dim % tw or side % root:
            raise ValueError(f"latent_dim {spec.latent_dim} with token width {tw} does not map onto "
                             f"a {side}x{side} encoder feature map")
        self.encoder_cfg = EncoderConfig(image_size=n, channels=channels, patch=side // root,
                                         token_width=tw, heads=int(enc.get("heads", 4)))
        self.decoder_cfg = decoder_config(spec, tw)
        self.decoder = build_decoder(self.decoder_cfg, seed=[spec.seed, 1], store=self.dec_store)
        self.enc_store = ParamStore()
        self.encoder = ImageEncoder(self.encoder_cfg, seed=np.random.default_rng([spec.seed, 2]),
                                    store=self.enc_store)
        self.stores["encoder"] = self.enc_store
        self.lrs["encoder"] = spec.lr_decoder

    def loss(self, step: int) -> Tensor:
        rng = step_rng(self.spec.seed, step)
        ids = self.src.batch_indices(rng, step, int(self.spec.batch["instances"]))
        images = self.src.train(ids).astype(np.float32)
        n_pix = images.shape[1] * images.shape[2]
        pix = sample_pixels(rng, len(ids), n_pix, int(self.spec.batch["pixels"]))
        coords = self.coords[pix]
        if self.spec.task == "autoencode":
            return autoencoder_loss(images, pix, coords, self.encoder, self.decoder)
        targets = images.reshape(len(ids), -1, 3)[np.arange(len(ids))[:, None], pix]
        return autodecoder_loss(ids, targets, self.table,
                                lambda z, emb: self.decoder(coords, z, emb), self.reg)

    def reconstruct(self, images: np.ndarray | None = None, ids=None, chunk: int = 8) -> np.ndarray:
        """Full-resolution decodes of ``images`` (auto-encoding) or table rows ``ids``."""
        n = self.src.size
        outs = []
        with no_grad():
            count = len(images) if images is not None else len(ids)
            for s in range(0, count, chunk):
                if images is not None:
                    part = images[s:s + chunk].astype(np.float32)
                    z, emb, b = self.encoder(part), None, len(part)
                else:
                    sel = np.asarray(ids[s:s + chunk])
                    z, emb, b = self.table.lookup(sel), self.table.embedding, len(sel)
                coords = np.broadcast_to(self.coords, (b,) + self.coords.shape)
                outs.append(self.decoder(coords, z, emb).data.reshape(b, n, n, 3))
        return np.concatenate(outs).astype(np.float64)

    def evaluate(self):
        test = self.src.test
        if self.spec.task == "autoencode":
            preds = self.reconstruct(images=test)
        else:
            preds = self.reconstruct(ids=np.arange(len(test)))
        scores = [psnr(np.clip(p, 0, 1), t) for p, t in zip(preds, test)]
        return float(np.mean(scores)), list(zip(preds, test))


class SceneTask(Task):
    """Auto-decoded multiview scenes rendered as radiance fields or light fields."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        ds = spec.dataset
        if ds["kind"] == "spheres":
            base = int(ds.get("seed", spec.seed))
            self.scenes = [generate_multiview(random_scene([base, i], int(ds.get("spheres", 2))),
                                              int(ds["views"]), int(ds["resolution"]), seed=base)
                           for i in range(int(ds["instances"]))]
        elif ds["kind"] == "multiview_dirs":
            self.scenes = [load_multiview(p, spec.seed) for p in ds["paths"]]
        else:
            raise ValueError(f"unknown scene dataset kind {ds['kind']!r}")
        self.rays = []
        for sc in self.scenes:
            per_view = [camera_rays(c) for c in sc.cameras]
            self.rays.append((np.stack([o for o, _ in per_view]), np.stack([d for _, d in per_view]),
                              sc.images.reshape(len(sc.cameras), -1, 3)))
        dists = [np.linalg.norm(c.center) for sc in self.scenes for c in sc.cameras]
        bound = max(sc.bound for sc in self.scenes)
        self.bound = bound
        self.near = max(min(dists) - 1.05 * bound, 1e-3)
        self.far = max(dists) + 1.05 * bound
        self.background = np.asarray(self.scenes[0].background, dtype=np.float64)
        self.sample_spec = SampleSpec(int(spec.samples.get("coarse", 32)), int(spec.samples.get("fine", 16)),
                                      self.near, self.far)
        self.pe = PosEncConfig(spec.pe_levels)
        self.decoder_cfg = decoder_config(spec)
        self.dec_store, self.lat_store = ParamStore(), ParamStore()
        self.decoder = build_decoder(self.decoder_cfg, seed=[spec.seed, 1], store=self.dec_store)
        self.table = LatentTable(len(self.scenes), spec.latent_dim, self.decoder_cfg.token_width,
                                 self.decoder_cfg.token_embed_dim, seed=np.random.default_rng([spec.seed, 2]),
                                 store=self.lat_store)
        self.stores = {"decoder": self.dec_store, "latent": self.lat_store}
        self.lrs = {"decoder": spec.lr_decoder, "latent": spec.lr_latent}
        self.reg = RegularizerConfig("squared_norm", spec.regularizer) if spec.regularizer else None

    def predict(self, z: Tensor, emb, origins, dirs, rng=None) -> Tensor:
        """Colors for rays grouped instance-major: ``len(origins)`` is a multiple of ``len(z)``."""
        n_inst = z.shape[0]
        if self.spec.task == "lightfield":
            x = lightfield_inputs(origins, dirs, self.bound, self.pe).astype(np.float32)
            out = self.decoder(x.reshape(n_inst, -1, x.shape[-1]), z, emb)
            return ops.reshape(out, (len(origins), 3))

        def field(points):
            r, s, _ = points.shape
            x = positional_encode(points / self.far, self.pe).astype(np.float32)
            out = ops.reshape(self.decoder(x.reshape(n_inst, -1, x.shape[-1]), z, emb), (r, s, 4))
            return ops.getitem(out, (Ellipsis, slice(0, 3))), ops.getitem(out, (Ellipsis, 3))
        return render_rays(field, origins, dirs, self.sample_spec, rng, self.background)

    def loss(self, step: int) -> Tensor:
        rng = step_rng(self.spec.seed, step)
        b = self.spec.batch
        n = len(self.scenes)
        n_inst = int(b["instances"])
        ids = np.arange(n) if n_inst >= n else np.sort(rng.choice(n, n_inst, replace=False))
        origins, dirs, targets = [], [], []
        for i in ids:
            o, d, c = self.rays[i]
            views = rng.choice(self.scenes[i].train_views, int(b["views"]))
            pix = sample_pixels(rng, len(views), o.shape[1], int(b["pixels"]))
            origins.append(o[views[:, None], pix].reshape(-1, 3))
            dirs.append(d[views[:, None], pix].reshape(-1, 3))
            targets.append(c[views[:, None], pix].reshape(-1, 3))
        origins, dirs, targets = (np.concatenate(a) for a in (origins, dirs, targets))
        return autodecoder_loss(ids, targets.astype(np.float32), self.table,
                                lambda z, emb: self.predict(z, emb, origins, dirs, rng), self.reg)

    def render_view(self, inst: int, view: int, chunk: int = 1024) -> np.ndarray:
        o, d, _ = self.rays[inst]
        cam = self.scenes[inst].cameras[view]
        out = []
        with no_grad():
            z = self.table.lookup([inst])
            for s in range(0, o.shape[1], chunk):
                out.append(self.predict(z, self.table.embedding, o[view, s:s + chunk],
                                        d[view, s:s + chunk]).data)
        return np.concatenate(out).reshape(cam.height, cam.width, 3).astype(np.float64)

    def evaluate(self):
        scores, pairs = [], []
        for i in range(min(len(self.scenes), self.spec.eval_instances)):
            sc = self.scenes[i]
            views = sc.test_views if len(sc.test_views) else sc.train_views[:1]
            for v in views:
                pred = self.render_view(i, int(v))
                scores.append(psnr(np.clip(pred, 0, 1), sc.images[v]))
                pairs.append((pred, sc.images[v]))
        return float(np.mean(scores)), pairs


def build_task(spec: ExperimentSpec) -> Task:
    if spec.task in ("autoencode", "autodecode"):
        return ImageTask(spec)
    return SceneTask(spec)


__all__ = ["Task", "ImageTask", "SceneTask", "ImageSource", "build_task", "decoder_config",
           "pixel_coords", "sample_pixels", "step_rng"]
