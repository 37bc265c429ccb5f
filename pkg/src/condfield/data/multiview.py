"""Synthetic multiview scenes of constant-density colored spheres.

Ground truth comes from exact emission-absorption integration through the
spheres, so renderers trained on these views have a known answer. Scenes on
disk are a directory holding one image per view plus ``cameras.json``: a list
of camera records (see :class:`condfield.encoding.Camera`) each carrying an
extra ``"image"`` key with the file name relative to the directory.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import kernels
from ..encoding import Camera, camera_rays
from .images import load_image, save_image


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    sigma: float
    color: tuple[float, float, float]


@dataclass
class SceneSpec:
    spheres: list[Sphere] = field(default_factory=list)
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bound: float = 1.0  # radius of a sphere that contains all geometry

    def __post_init__(self):
        for s in self.spheres:
            if np.linalg.norm(s.center) + s.radius > self.bound + 1e-9:
                raise ValueError("sphere extends past the scene bound")

    def arrays(self):
        k = len(self.spheres)
        centers = np.array([s.center for s in self.spheres], dtype=np.float64).reshape(k, 3)
        radii = np.array([s.radius for s in self.spheres], dtype=np.float64)
        sigmas = np.array([s.sigma for s in self.spheres], dtype=np.float64)
        colors = np.array([s.color for s in self.spheres], dtype=np.float64).reshape(k, 3)
        return centers, radii, sigmas, colors

    def render(self, origins, dirs) -> np.ndarray:
        centers, radii, sigmas, colors = self.arrays()
        return kernels.render_spheres(np.ascontiguousarray(origins, dtype=np.float64),
                                      np.ascontiguousarray(dirs, dtype=np.float64),
                                      centers, radii, sigmas, colors,
                                      np.asarray(self.background, dtype=np.float64))

    def field(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Point-wise (rgb, sigma) of the analytic density field."""
        centers, radii, sigmas, colors = self.arrays()
        p = np.asarray(points, dtype=np.float64)
        inside = np.linalg.norm(p[..., None, :] - centers, axis=-1) < radii
        dens = inside * sigmas
        tot = dens.sum(-1)
        rgb = (dens @ colors) / np.where(tot > 0, tot, 1.0)[..., None]
        return rgb, tot


def random_scene(seed: int | Sequence[int], n_spheres: int = 3, bound: float = 1.0,
                 sigma: float = 20.0) -> SceneSpec:
    rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), 0x5CE7E])
    spheres = []
    for _ in range(n_spheres):
        r = rng.uniform(0.2, 0.45) * bound
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        c = direction * rng.uniform(0.0, bound - r)
        spheres.append(Sphere(tuple(c), float(r), sigma, tuple(rng.uniform(0.1, 0.9, 3))))
    return SceneSpec(spheres, bound=bound)


def camera_ring(n_views: int, resolution: int, distance: float = 4.0,
                elevation_deg: float = 20.0, fov_deg: float = 40.0) -> list[Camera]:
    """Cameras evenly spaced in azimuth, all looking at the origin with +z up."""
    if n_views < 1 or resolution < 1 or distance <= 0:
        raise ValueError("invalid camera ring parameters")
    el = math.radians(elevation_deg)
    cams = []
    for i in range(n_views):
        az = 2.0 * math.pi * i / n_views
        eye = distance * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        cams.append(Camera.look_at(eye, np.zeros(3), (0.0, 0.0, 1.0), resolution, resolution, fov_deg))
    return cams


def holdout_split(n_views: int, seed: int = 0, fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """(train, test) view indices; the test set has floor(fraction * n_views) views."""
    n_test = int(math.floor(fraction * n_views))
    perm = np.random.default_rng([seed, n_views]).permutation(n_views)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass
class MultiviewScene:
    cameras: list[Camera]
    images: np.ndarray                  # (V, H, W, 3)
    train_views: np.ndarray
    test_views: np.ndarray
    spec: SceneSpec | None = None

    @property
    def bound(self) -> float:
        return self.spec.bound if self.spec is not None else 1.0

    @property
    def background(self):
        return self.spec.background if self.spec is not None else (0.0, 0.0, 0.0)


def generate_multiview(spec: SceneSpec, n_views: int, resolution: int, seed: int = 0,
                       distance: float = 4.0, elevation_deg: float = 20.0,
                       fov_deg: float = 40.0) -> MultiviewScene:
    cams = camera_ring(n_views, resolution, distance, elevation_deg, fov_deg)
    imgs = np.stack([spec.render(*camera_rays(c)).reshape(resolution, resolution, 3) for c in cams])
    train, test = holdout_split(n_views, seed)
    return MultiviewScene(cams, imgs, train, test, spec)


def save_multiview(directory: str | os.PathLike, scene: MultiviewScene, ext: str = ".png") -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (cam, img) in enumerate(zip(scene.cameras, scene.images)):
        name = f"view_{i:04d}{ext}"
        save_image(d / name, img)
        records.append({**cam.to_record(), "image": name})
    (d / "cameras.json").write_text(json.dumps(records, indent=1))


def load_multiview(directory: str | os.PathLike, seed: int = 0) -> MultiviewScene:
    """Read a directory of (image, camera) pairs; views are split with :func:`holdout_split`."""
    d = Path(directory)
    records = json.loads((d / "cameras.json").read_text())
    cams = [Camera.from_record(r) for r in records]
    imgs = np.stack([load_image(d / r["image"]) for r in records])
    train, test = holdout_split(len(cams), seed)
    return MultiviewScene(cams, imgs, train, test)
