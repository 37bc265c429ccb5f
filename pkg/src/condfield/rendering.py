"""Differentiable volume rendering and light-field ray evaluation.

A *field* is any callable ``field(points) -> (rgb, sigma)`` taking an
(R, S, 3) array of world-space points and returning Tensors of shape
(R, S, 3) and (R, S). Sample ``i`` on a ray stands for the interval
``[t_i, t_{i+1})``; the last one extends to ``far``. Intervals are floored at
``MIN_DELTA`` so duplicated depths after merging stay well defined.
Background is composited through the final transmittance; images are linear
with no gamma curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .autodiff import Tensor, make_node, no_grad, ops
from .encoding import PosEncConfig, Ray, plucker, positional_encode

MIN_DELTA = 1e-6

Field = Callable[[np.ndarray], "tuple[Tensor, Tensor]"]


@dataclass(frozen=True)
class SampleSpec:
    coarse: int = 128
    fine: int = 64
    near: float = 2.0
    far: float = 6.0

    def __post_init__(self):
        if not self.near < self.far:
            raise ValueError("near must be smaller than far")
        if self.coarse < 1 or self.fine < 0:
            raise ValueError("need at least one coarse sample")


def stratified_samples(n_rays: int, spec: SampleSpec, rng: np.random.Generator | None) -> np.ndarray:
    """One depth per equal-width bin of [near, far]; bin midpoints when ``rng`` is None."""
    edges = np.linspace(spec.near, spec.far, spec.coarse + 1)
    u = np.full((n_rays, spec.coarse), 0.5) if rng is None else rng.random((n_rays, spec.coarse))
    return edges[:-1] + u * (edges[1:] - edges[:-1])


def sample_deltas(depths: np.ndarray, far: float) -> np.ndarray:
    d = np.diff(depths, axis=-1, append=np.full(depths.shape[:-1] + (1,), far))
    return np.maximum(d, MIN_DELTA)


def importance_samples(weights: np.ndarray, depths: np.ndarray, n_fine: int,
                       rng: np.random.Generator | None, far: float) -> np.ndarray:
    """Inverse-transform draws from the piecewise-constant PDF over the coarse intervals.

    Falls back to a uniform PDF for rays whose weights are all zero. With
    ``rng`` None the quantiles are evenly spaced.
    """
    n_rays = depths.shape[0]
    edges = np.concatenate([depths, np.full((n_rays, 1), far)], axis=-1)
    if rng is None:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, (n_rays, n_fine))
    else:
        u = rng.random((n_rays, n_fine))
    w = np.maximum(np.asarray(weights, dtype=np.float64), 0.0)
    return kernels.sample_pdf(np.ascontiguousarray(edges, dtype=np.float64),
                              np.ascontiguousarray(w), np.ascontiguousarray(u, dtype=np.float64))


def composite(sigma, rgb, deltas: np.ndarray, background=(0.0, 0.0, 0.0)) -> tuple[Tensor, np.ndarray]:
    """Alpha-composite (R, S) densities and (R, S, 3) colors; returns color and weights."""
    sigma = sigma if isinstance(sigma, Tensor) else Tensor(sigma)
    rgb = rgb if isinstance(rgb, Tensor) else Tensor(rgb)
    dt = sigma.dtype
    bg = np.asarray(background, dtype=dt)
    deltas = np.ascontiguousarray(deltas, dtype=dt)
    s_data = np.ascontiguousarray(sigma.data)
    c_data = np.ascontiguousarray(rgb.data)
    color, weights, t_final = kernels.composite_forward(s_data, c_data, deltas, bg)

    def bwd(g):
        gs, gc = kernels.composite_backward(np.ascontiguousarray(g, dtype=dt), s_data, c_data,
                                            deltas, bg, weights, t_final)
        return gs, gc
    return make_node(color, "composite", (sigma, rgb), bwd), weights


def composite_samples(depths, sigma, rgb, far: float, background=(0.0, 0.0, 0.0)):
    return composite(sigma, rgb, sample_deltas(np.asarray(depths), far), background)


def _points(origins, dirs, depths):
    return origins[:, None, :] + depths[..., None] * dirs[:, None, :]


def render_rays(field: Field, origins, dirs, spec: SampleSpec,
                rng: np.random.Generator | None = None, background=(0.0, 0.0, 0.0)) -> Tensor:
    """Hierarchical rendering with one field for both passes.

    Coarse samples are evaluated once, with gradient; their detached weights
    drive importance sampling; fine samples are evaluated and the merged,
    depth-sorted set is composited once.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    n = origins.shape[0]
    t_c = stratified_samples(n, spec, rng)
    rgb_c, sig_c = field(_points(origins, dirs, t_c))
    if spec.fine == 0:
        return composite_samples(t_c, sig_c, rgb_c, spec.far, background)[0]
    with no_grad():
        _, w = composite_samples(t_c, sig_c.detach(), rgb_c.detach(), spec.far, background)
    t_f = importance_samples(w, t_c, spec.fine, rng, spec.far)
    rgb_f, sig_f = field(_points(origins, dirs, t_f))
    t_all = np.concatenate([t_c, t_f], axis=-1)
    order = np.argsort(t_all, axis=-1, kind="stable")
    t_sorted = np.take_along_axis(t_all, order, -1)
    sig = ops.take_along_axis(ops.concat([sig_c, sig_f], axis=1), order, axis=1)
    rgb = ops.take_along_axis(ops.concat([rgb_c, rgb_f], axis=1), order[..., None], axis=1)
    return composite_samples(t_sorted, sig, rgb, spec.far, background)[0]


def render_uniform(field: Field, origins, dirs, near: float, far: float, n: int,
                   background=(0.0, 0.0, 0.0)) -> Tensor:
    """Brute-force quadrature with ``n`` left-endpoint samples tiling [near, far]."""
    origins = np.asarray(origins, dtype=np.float64)
    t = np.broadcast_to(near + (far - near) * np.arange(n) / n, (origins.shape[0], n))
    rgb, sig = field(_points(origins, np.asarray(dirs, dtype=np.float64), t))
    return composite_samples(t, sig, rgb, far, background)[0]


def render_nerf_ray(ray: Ray, field: Field, spec: SampleSpec,
                    rng: np.random.Generator | None = None, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    return render_rays(field, ray.origin[None], ray.direction[None], spec, rng, background).data[0]


class OutsideBoundsError(ValueError):
    pass


def lightfield_inputs(origins, dirs, scene_radius: float, pe: PosEncConfig,
                      moment_scale: float | None = None) -> np.ndarray:
    """Encoded Pluecker coordinates; rays must start outside the scene's bounding sphere."""
    origins = np.asarray(origins, dtype=np.float64)
    if np.any(np.linalg.norm(origins, axis=-1) <= scene_radius):
        raise OutsideBoundsError("light-field rays must originate outside the scene bounds")
    pl = plucker(origins, dirs)
    # moments of rays that hit the scene are at most scene_radius in norm
    scale = moment_scale if moment_scale is not None else 2.0 * scene_radius
    pl[..., 3:] = np.clip(pl[..., 3:] / scale, -1.0, 1.0)
    return positional_encode(pl, pe)


def render_lightfield_rays(field_fn: Callable[[np.ndarray], Tensor], origins, dirs,
                           scene_radius: float, pe: PosEncConfig,
                           moment_scale: float | None = None) -> Tensor:
    """One field evaluation per ray on its encoded Pluecker coordinates."""
    return field_fn(lightfield_inputs(origins, dirs, scene_radius, pe, moment_scale))


def render_lightfield_ray(ray: Ray, field_fn, scene_radius: float, pe: PosEncConfig,
                          moment_scale: float | None = None) -> np.ndarray:
    return render_lightfield_rays(field_fn, ray.origin[None], ray.direction[None],
                                  scene_radius, pe, moment_scale).data[0]
