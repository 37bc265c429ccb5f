"""Experiment specifications, stored as JSON files.

A spec names a task, a dataset, a decoder architecture and the latent size N;
everything else has a micro-scale default. Example::

    {
      "task": "autoencode",
      "latent_dim": 128,
      "decoder": {"family": "attention", "width": 64, "stages": 2},
      "dataset": {"kind": "tiled_mnist", "grid": 4, "glyph": 8, "unique": 16},
      "steps": 500,
      "seed": 0
    }

Tasks:

``autoencode``
    Images through an :class:`~condfield.conditioning.ImageEncoder`.
``autodecode``
    Images with a per-image latent table (also used for single-image overfits).
``nerf`` / ``lightfield``
    Multiview scenes with a per-scene latent table; novel-view PSNR on held-out views.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

TASKS = ("autoencode", "autodecode", "nerf", "lightfield")
TABLE_TASKS = ("autodecode", "nerf", "lightfield")

# instances per batch, views per instance, pixels per view
DEFAULT_BATCH = {
    "autoencode": {"instances": 128, "views": 1, "pixels": 512},
    "autodecode": {"instances": 128, "views": 1, "pixels": 64},
    "nerf": {"instances": 64, "views": 2, "pixels": 64},
    "lightfield": {"instances": 64, "views": 2, "pixels": 64},
}

DEFAULT_DATASET = {
    "autoencode": {"kind": "tiled_mnist", "grid": 4, "glyph": 8, "unique": 16, "pool": "sklearn",
                   "test_size": 16},
    "autodecode": {"kind": "tiled_mnist", "grid": 4, "glyph": 8, "unique": 16, "pool": "sklearn",
                   "train_size": 64},
    "nerf": {"kind": "spheres", "instances": 8, "views": 20, "resolution": 16, "spheres": 2},
    "lightfield": {"kind": "spheres", "instances": 8, "views": 20, "resolution": 16, "spheres": 2},
}

MIN_TOKEN_WIDTH = 8


@dataclass
class ExperimentSpec:
    task: str = "autoencode"
    latent_dim: int = 128
    decoder: dict = field(default_factory=lambda: {"family": "concat"})
    dataset: dict | None = None
    encoder: dict = field(default_factory=dict)
    batch: dict | None = None
    pe_levels: int | None = None
    samples: dict = field(default_factory=lambda: {"coarse": 32, "fine": 16})
    steps: int = 20000
    lr_decoder: float = 1e-4
    lr_latent: float = 1e-3
    # learning rates decay exponentially to this fraction at the final step
    lr_decay: float = 1.0
    eval_every: int = 1000
    checkpoint_every: int = 1000
    eval_instances: int = 4
    regularizer: float | None = None
    seed: int = 0
    out_dir: str = "runs/experiment"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if "family" not in self.decoder:
            raise ValueError("decoder config needs a 'family'")
        for key in ("in_dim", "latent_dim", "output"):
            if key in self.decoder:
                raise ValueError(f"decoder.{key} is derived from the task and latent_dim")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.steps < 0 or self.eval_every < 1 or self.checkpoint_every < 1:
            raise ValueError("steps must be >= 0 and intervals >= 1")
        self.dataset = {**DEFAULT_DATASET[self.task], **(self.dataset or {})}
        self.batch = {**DEFAULT_BATCH[self.task], **(self.batch or {})}
        if self.pe_levels is None:
            self.pe_levels = 6 if self.task == "lightfield" else 10
        if self.regularizer is None:
            self.regularizer = 1e-4 if self.task in TABLE_TASKS else 0.0
        if self.regularizer < 0:
            raise ValueError("regularizer weight must be non-negative")

    @property
    def family(self) -> str:
        return self.decoder["family"]

    @property
    def coord_dim(self) -> int:
        return {"autoencode": 2, "autodecode": 2, "nerf": 3, "lightfield": 6}[self.task]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown experiment fields {sorted(unknown)}")
        return cls(**d)

    def with_updates(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def choose_tokens(latent_dim: int, max_side: int = 4) -> tuple[int, int]:
    """(tokens P, token width G) with P the largest square <= max_side**2 keeping G >= 8.

    The side of P must divide ``max_side`` so the encoder's feature map splits
    into whole patches. Falls back to a single token.
    """
    for side in range(max_side, 0, -1):
        if max_side % side:
            continue
        p = side * side
        if latent_dim % p == 0 and latent_dim // p >= MIN_TOKEN_WIDTH:
            return p, latent_dim // p
    return 1, latent_dim


def default_encoder_stages(image_size: int) -> int:
    """Stride-2 stages needed to reach a 4 x 4 feature map."""
    return max(1, int(round(math.log2(max(image_size // 4, 1)))))
