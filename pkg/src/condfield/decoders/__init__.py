"""Conditional neural-field decoders: concatenation, hyper-network, attention."""

from __future__ import annotations

import numpy as np

from ..autodiff import ParamStore
from .attention import AttentionDecoder
from .base import Decoder, field_activation
from .concat import ConcatDecoder
from .config import (DecoderConfig, concat_layout, count_params, hyper_predicted_count,
                     split_count, split_schedule)
from .hyper import HyperDecoder

_CLASSES = {"concat": ConcatDecoder, "hyper": HyperDecoder, "attention": AttentionDecoder}


def build_decoder(cfg: DecoderConfig, seed: int | np.random.Generator = 0,
                  store: ParamStore | None = None, dtype=np.float32, **kwargs) -> Decoder:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    store = store if store is not None else ParamStore(dtype)
    return _CLASSES[cfg.family](cfg, rng, store=store, **kwargs)


__all__ = [
    "DecoderConfig", "Decoder", "ConcatDecoder", "HyperDecoder", "AttentionDecoder",
    "build_decoder", "count_params", "split_schedule", "split_count", "concat_layout",
    "hyper_predicted_count", "field_activation",
]
