"""Coordinate encodings and camera/ray geometry.

Cameras are right-handed and look down their local -z axis, with +x to the
right and +y up; image rows grow downward. Pixel ``(col, row)`` is sampled at
its center ``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PosEncConfig:
    l: int = 10  # noqa: E741  (octave count)
    include_identity: bool = False

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"positional encoding needs at least one octave, got l={self.l}")

    def out_dim(self, d: int) -> int:
        return d * (2 * self.l + int(self.include_identity))


def positional_encode(x, cfg: PosEncConfig) -> np.ndarray:
    """Map each scalar of ``x[..., d]`` to sin/cos at frequencies 2^j * pi, j < l.

    Per component the layout is ``(sin(2^0 pi x), ..., sin(2^(l-1) pi x),
    cos(2^0 pi x), ..., cos(2^(l-1) pi x))``, optionally preceded by ``x``.
    Components appear in input order.
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    freqs = (2.0 ** np.arange(cfg.l)) * np.pi
    arg = x[..., None] * freqs.astype(x.dtype)
    parts = [np.sin(arg), np.cos(arg)]
    if cfg.include_identity:
        parts.insert(0, x[..., None])
    out = np.concatenate(parts, axis=-1)
    return out.reshape(x.shape[:-1] + (-1,))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("ray direction must have unit norm")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass
class Camera:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: np.ndarray = field(default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(3, 4)
        if self.fx == 0 or self.fy == 0:
            raise ValueError("camera focal length must be nonzero")
        rot = self.rotation
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-6:
            raise ValueError("camera rotation is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:, :3]

    @property
    def center(self) -> np.ndarray:
        return self.pose[:, 3]

    def to_record(self) -> dict:
        return {"width": self.width, "height": self.height, "fx": self.fx, "fy": self.fy,
                "cx": self.cx, "cy": self.cy, "pose": self.pose.reshape(-1).tolist()}

    @classmethod
    def from_record(cls, rec: dict) -> "Camera":
        return cls(int(rec["width"]), int(rec["height"]), float(rec["fx"]), float(rec["fy"]),
                   float(rec["cx"]), float(rec["cy"]), np.asarray(rec["pose"], dtype=np.float64))

    @classmethod
    def look_at(cls, eye, target, up, width: int, height: int, fov_deg: float) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        rot = np.stack([right, true_up, -fwd], axis=1)
        focal = 0.5 * width / np.tan(0.5 * np.deg2rad(fov_deg))
        return cls(width, height, focal, focal, width / 2, height / 2,
                   np.hstack([rot, eye[:, None]]))


def rays_from_pixels(cam: Camera, pixels) -> tuple[np.ndarray, np.ndarray]:
    """World-space origins and unit directions for an (N, 2) array of (col, row)."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if np.any(px < 0) or np.any(px[:, 0] >= cam.width) or np.any(px[:, 1] >= cam.height):
        raise ValueError("pixel outside the image")
    d_cam = np.stack([(px[:, 0] + 0.5 - cam.cx) / cam.fx,
                      -(px[:, 1] + 0.5 - cam.cy) / cam.fy,
                      -np.ones(len(px))], axis=-1)
    dirs = d_cam @ cam.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(cam.center, dirs.shape).copy()
    return origins, dirs


def ray_from_pixel(cam: Camera, pixel) -> Ray:
    o, d = rays_from_pixels(cam, np.asarray(pixel)[None])
    return Ray(o[0], d[0])


def camera_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Rays for every pixel in row-major order."""
    rows, cols = np.mgrid[0:cam.height, 0:cam.width]
    return rays_from_pixels(cam, np.stack([cols.ravel(), rows.ravel()], axis=-1))


def plucker(origins, dirs) -> np.ndarray:
    """(d, o x d) for arrays of rays; invariant to sliding o along d."""
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    return np.concatenate([dirs, np.cross(origins, dirs)], axis=-1)


def plucker_from_ray(ray: Ray) -> np.ndarray:
    return plucker(ray.origin, ray.direction)


def save_cameras(path: str | os.PathLike, cameras: list[Camera]) -> None:
    Path(path).write_text(json.dumps([c.to_record() for c in cameras], indent=1))


def load_cameras(path: str | os.PathLike) -> list[Camera]:
    return [Camera.from_record(r) for r in json.loads(Path(path).read_text())]
