"""Decoder configuration, concatenation split schedule and parameter counts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

FAMILIES = ("concat", "hyper", "attention")
CONCAT_MODES = ("split", "none", "skip")
OUTPUTS = {"rgb": 3, "rgb_sigma": 4}
MAX_SPLITS = 8


@dataclass
class DecoderConfig:
    """Architecture and hyper-parameters of one conditional decoder.

    ``depth`` counts linear layers including the output head, so the default
    8-layer MLP has one input layer, six hidden layers and a head.
    ``token_embed_dim`` > 0 gives each latent token a learnable embedding shared
    across instances (used by the auto-decoder for hyper and attention).
    """

    family: str
    latent_dim: int
    in_dim: int
    output: str = "rgb"
    width: int = 256
    depth: int = 8
    stages: int = 5
    dense_per_stage: int = 3
    heads: int = 16
    key_dim: int = 256
    hyper_width: int = 64
    hyper_depth: int = 3
    token_width: int = 128
    token_embed_dim: int = 0
    concat_mode: str = "split"
    num_splits: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown decoder family {self.family!r}")
        if self.output not in OUTPUTS:
            raise ValueError(f"unknown output kind {self.output!r}")
        if self.concat_mode not in CONCAT_MODES:
            raise ValueError(f"unknown concat mode {self.concat_mode!r}")
        if self.latent_dim < 0 or self.in_dim < 1:
            raise ValueError("latent_dim must be >= 0 and in_dim >= 1")
        if self.family != "concat" and self.latent_dim % self.token_width:
            raise ValueError(f"latent_dim {self.latent_dim} is not a multiple of "
                             f"token_width {self.token_width}")
        if self.family == "attention" and self.key_dim % self.heads:
            raise ValueError("key_dim must be divisible by heads")

    @property
    def out_dim(self) -> int:
        return OUTPUTS[self.output]

    @property
    def num_tokens(self) -> int:
        return self.latent_dim // self.token_width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown decoder config fields {sorted(unknown)}")
        return cls(**d)


def split_count(m: int, width: int = 256) -> int:
    """Number of sub-codes: ceil(m / width), capped at 8.

    With width 256 this is 8 for m >= 2048 and ceil(m / 256) below.
    """
    if m < 1:
        raise ValueError("latent dimension must be positive")
    return min(MAX_SPLITS, math.ceil(m / width))


def split_schedule(m: int, depth: int, width: int = 256,
                   count: int | None = None) -> list[tuple[int, int]]:
    """(layer index, sub-code extent) pairs spreading ``m`` evenly over the layers."""
    s = split_count(m, width) if count is None else count
    if s < 1 or s > m:
        raise ValueError(f"invalid split count {s} for latent dimension {m}")
    if depth < s:
        raise ValueError(f"depth {depth} cannot host {s} sub-codes")
    base, extra = divmod(m, s)
    return [(i * depth // s, base + (1 if i < extra else 0)) for i in range(s)]


def concat_layout(cfg: DecoderConfig) -> list[dict]:
    """Per-layer input composition of the concatenation MLP.

    Each entry has ``hidden`` (activations from below), ``latent`` (sub-code
    columns), ``skip`` (re-injected input columns) and ``out``.
    """
    m, d, k = cfg.latent_dim, cfg.depth, cfg.width
    extents = [0] * d
    skip_at = None
    if m > 0:
        if cfg.concat_mode == "split":
            # shallow micro-scale networks take at most one sub-code per layer
            count = cfg.num_splits if cfg.num_splits is not None else min(split_count(m, k), d)
            for layer, ext in split_schedule(m, d, k, count):
                extents[layer] = ext
        else:
            extents[0] = m
            if cfg.concat_mode == "skip":
                skip_at = d // 2
    layout = []
    for i in range(d):
        layout.append({
            "hidden": cfg.in_dim if i == 0 else k,
            "latent": extents[i],
            "skip": cfg.in_dim + m if i == skip_at else 0,
            "out": cfg.out_dim if i == d - 1 else k,
        })
    return layout


def primary_layer_dims(cfg: DecoderConfig) -> list[tuple[int, int]]:
    dims = [cfg.in_dim] + [cfg.width] * (cfg.depth - 1) + [cfg.out_dim]
    return list(zip(dims[:-1], dims[1:]))


def hyper_predicted_count(cfg: DecoderConfig) -> int:
    return sum(i * o + o for i, o in primary_layer_dims(cfg))


def hyper_input_dim(cfg: DecoderConfig) -> int:
    return cfg.latent_dim + cfg.num_tokens * cfg.token_embed_dim


def _mlp_count(dims: list[int]) -> int:
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def count_params(cfg: DecoderConfig) -> int:
    """Exact trainable parameter count of the decoder alone."""
    if cfg.family == "concat":
        return sum((e["hidden"] + e["latent"] + e["skip"]) * e["out"] + e["out"]
                   for e in concat_layout(cfg))
    if cfg.family == "hyper":
        psi = [hyper_input_dim(cfg)] + [cfg.hyper_width] * (cfg.hyper_depth - 1) \
            + [hyper_predicted_count(cfg)]
        return _mlp_count(psi)
    k, dk = cfg.width, cfg.key_dim
    token_dim = cfg.token_width + cfg.token_embed_dim
    per_stage = (2 * k                      # layer norm
                 + k * dk + dk              # query
                 + 2 * (token_dim * dk + dk)  # key, value
                 + dk * k + k               # output projection
                 + cfg.dense_per_stage * (k * k + k))
    return (cfg.in_dim * k + k) + cfg.stages * per_stage + (k * cfg.out_dim + cfg.out_dim)
