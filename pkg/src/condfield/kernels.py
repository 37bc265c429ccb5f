"""Per-ray numeric kernels with numba and numpy implementations.

The public names (``composite_forward``, ``composite_backward``,
``sample_pdf``, ``area_resize``, ``render_spheres``) point at the backend chosen
by :mod:`condfield._accel`. The ``*_numba`` and ``*_numpy`` variants stay
importable for equivalence tests and the benchmark script.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit


# -- volume compositing -------------------------------------------------------
# For sample i with density s_i, interval d_i and color c_i:
#   alpha_i = 1 - exp(-s_i d_i),  T_i = exp(-sum_{j<i} s_j d_j),  w_i = T_i alpha_i
#   C = sum_i w_i c_i + T_n * background


def composite_forward_numpy(sigma, rgb, delta, background):
    tau = sigma * delta
    cum = np.cumsum(tau, axis=-1)
    trans = np.exp(-(cum - tau))
    weights = trans * -np.expm1(-tau)
    t_final = np.exp(-cum[..., -1])
    color = np.einsum("rs,rsc->rc", weights, rgb) + t_final[:, None] * background
    return color, weights, t_final


def composite_backward_numpy(grad, sigma, rgb, delta, background, weights, t_final):
    tau = sigma * delta
    trans_next = np.exp(-np.cumsum(tau, axis=-1))
    cg = np.einsum("rsc,rc->rs", rgb, grad)
    wcg = weights * cg
    # suffix sums over i > k, plus the background term
    suffix = np.cumsum(wcg[:, ::-1], axis=-1)[:, ::-1] - wcg
    suffix = suffix + (t_final * (grad @ background))[:, None]
    g_sigma = delta * (trans_next * cg - suffix)
    g_rgb = weights[..., None] * grad[:, None, :]
    return g_sigma, g_rgb


@njit
def composite_forward_numba(sigma, rgb, delta, background):
    n_rays, n_s = sigma.shape
    color = np.zeros((n_rays, 3), dtype=sigma.dtype)
    weights = np.zeros((n_rays, n_s), dtype=sigma.dtype)
    t_final = np.zeros(n_rays, dtype=sigma.dtype)
    for r in range(n_rays):
        acc = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for i in range(n_s):
            tau = sigma[r, i] * delta[r, i]
            w = math.exp(-acc) * -math.expm1(-tau)
            acc += tau
            weights[r, i] = w
            c0 += w * rgb[r, i, 0]
            c1 += w * rgb[r, i, 1]
            c2 += w * rgb[r, i, 2]
        tf = math.exp(-acc)
        t_final[r] = tf
        color[r, 0] = c0 + tf * background[0]
        color[r, 1] = c1 + tf * background[1]
        color[r, 2] = c2 + tf * background[2]
    return color, weights, t_final


@njit
def composite_backward_numba(grad, sigma, rgb, delta, background, weights, t_final):
    n_rays, n_s = sigma.shape
    g_sigma = np.zeros((n_rays, n_s), dtype=sigma.dtype)
    g_rgb = np.zeros((n_rays, n_s, 3), dtype=sigma.dtype)
    for r in range(n_rays):
        g0, g1, g2 = grad[r, 0], grad[r, 1], grad[r, 2]
        suffix = t_final[r] * (g0 * background[0] + g1 * background[1] + g2 * background[2])
        acc = 0.0
        for i in range(n_s):
            acc += sigma[r, i] * delta[r, i]
        # walk backwards; acc holds sum_{j<=i} tau_j at the top of each iteration
        for i in range(n_s - 1, -1, -1):
            cg = rgb[r, i, 0] * g0 + rgb[r, i, 1] * g1 + rgb[r, i, 2] * g2
            g_sigma[r, i] = delta[r, i] * (math.exp(-acc) * cg - suffix)
            w = weights[r, i]
            suffix += w * cg
            g_rgb[r, i, 0] = w * g0
            g_rgb[r, i, 1] = w * g1
            g_rgb[r, i, 2] = w * g2
            acc -= sigma[r, i] * delta[r, i]
    return g_sigma, g_rgb


# -- inverse-transform sampling -----------------------------------------------

def sample_pdf_numpy(edges, weights, u):
    """Draw from piecewise-constant PDFs: bin i spans edges[:, i:i+2], mass ~ weights[:, i]."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum(axis=-1, keepdims=True)
    empty = total[:, 0] <= 0
    if np.any(empty):
        w = w.copy()
        w[empty] = 1.0
        total = w.sum(axis=-1, keepdims=True)
    cdf = np.concatenate([np.zeros_like(total), np.cumsum(w, axis=-1) / total], axis=-1)
    cdf[:, -1] = 1.0
    n_rays, n_edges = cdf.shape
    offs = 2.0 * np.arange(n_rays)[:, None]
    idx = np.searchsorted((cdf + offs).ravel(), (u + offs).ravel(), side="right")
    idx = idx.reshape(u.shape) - np.arange(n_rays)[:, None] * n_edges
    above = np.clip(idx, 1, n_edges - 1)
    below = above - 1
    c_lo = np.take_along_axis(cdf, below, -1)
    c_hi = np.take_along_axis(cdf, above, -1)
    e_lo = np.take_along_axis(edges, below, -1)
    e_hi = np.take_along_axis(edges, above, -1)
    span = c_hi - c_lo
    frac = np.where(span > 0, (u - c_lo) / np.where(span > 0, span, 1.0), 0.0)
    return (e_lo + np.clip(frac, 0.0, 1.0) * (e_hi - e_lo)).astype(edges.dtype)


@njit
def sample_pdf_numba(edges, weights, u):
    n_rays, n_bins = weights.shape
    n_u = u.shape[1]
    out = np.empty((n_rays, n_u), dtype=edges.dtype)
    cdf = np.empty(n_bins + 1)
    for r in range(n_rays):
        total = 0.0
        for i in range(n_bins):
            total += weights[r, i]
        uniform = total <= 0.0
        if uniform:
            total = float(n_bins)
        cdf[0] = 0.0
        acc = 0.0
        for i in range(n_bins):
            acc += 1.0 if uniform else weights[r, i]
            cdf[i + 1] = acc / total
        cdf[n_bins] = 1.0
        for j in range(n_u):
            x = u[r, j]
            lo, hi = 0, n_bins + 1
            while lo < hi:  # first index with cdf > x
                mid = (lo + hi) // 2
                if cdf[mid] <= x:
                    lo = mid + 1
                else:
                    hi = mid
            above = min(max(lo, 1), n_bins)
            below = above - 1
            span = cdf[above] - cdf[below]
            frac = (x - cdf[below]) / span if span > 0 else 0.0
            frac = min(max(frac, 0.0), 1.0)
            out[r, j] = edges[r, below] + frac * (edges[r, above] - edges[r, below])
    return out


# -- area-averaging resize ----------------------------------------------------

def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row i holds the overlap of output cell i with each input cell, normalized."""
    scale = n_in / n_out
    lo = np.arange(n_out)[:, None] * scale
    hi = lo + scale
    left = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, left + 1) - np.maximum(lo, left), 0, None)
    return overlap / scale


def area_resize_numpy(images, out_h, out_w):
    """Downscale a stack of (N, H, W) images by exact area averaging."""
    a_h = _area_matrix(images.shape[1], out_h)
    a_w = _area_matrix(images.shape[2], out_w)
    return np.einsum("ih,nhw,jw->nij", a_h, images.astype(np.float64), a_w)


@njit
def area_resize_numba(images, out_h, out_w):
    n, h, w = images.shape
    sy = h / out_h
    sx = w / out_w
    out = np.zeros((n, out_h, out_w))
    for k in range(n):
        for i in range(out_h):
            y0 = i * sy
            y1 = y0 + sy
            for j in range(out_w):
                x0 = j * sx
                x1 = x0 + sx
                acc = 0.0
                for y in range(int(math.floor(y0)), min(int(math.ceil(y1)), h)):
                    oy = min(y1, y + 1.0) - max(y0, float(y))
                    if oy <= 0:
                        continue
                    for x in range(int(math.floor(x0)), min(int(math.ceil(x1)), w)):
                        ox = min(x1, x + 1.0) - max(x0, float(x))
                        if ox > 0:
                            acc += oy * ox * images[k, y, x]
                out[k, i, j] = acc / (sy * sx)
    return out


# -- analytic emission-absorption spheres -------------------------------------

def _sphere_intervals(origins, dirs, centers, radii):
    oc = origins[:, None, :] - centers[None, :, :]
    b = np.einsum("rkc,rc->rk", oc, dirs)
    c = np.einsum("rkc,rkc->rk", oc, oc) - radii[None, :] ** 2
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t0 = np.maximum(-b - root, 0.0)
    t1 = np.maximum(-b + root, 0.0)
    hit = (disc > 0) & (t1 > t0)
    return np.where(hit, t0, 0.0), np.where(hit, t1, 0.0)


def render_spheres_numpy(origins, dirs, centers, radii, sigmas, colors, background):
    """Exact color of rays through constant-density, constant-color spheres.

    Overlaps emit the density-weighted mean color of the spheres covering them.
    """
    t0, t1 = _sphere_intervals(origins, dirs, centers, radii)
    n_rays = origins.shape[0]
    if centers.shape[0] == 0:
        return np.broadcast_to(background, (n_rays, 3)).astype(np.float64)
    bounds = np.sort(np.concatenate([t0, t1], axis=1), axis=1)
    a, b = bounds[:, :-1], bounds[:, 1:]
    mid = 0.5 * (a + b)
    inside = (t0[:, None, :] < mid[..., None]) & (mid[..., None] < t1[:, None, :])
    dens = inside * sigmas
    s_tot = dens.sum(-1)
    c_mix = np.einsum("rik,kc->ric", dens, colors) / np.where(s_tot > 0, s_tot, 1.0)[..., None]
    tau = s_tot * (b - a)
    cum = np.cumsum(tau, axis=1)
    w = np.exp(-(cum - tau)) * -np.expm1(-tau)
    return np.einsum("ri,ric->rc", w, c_mix) + np.exp(-cum[:, -1])[:, None] * background


@njit
def render_spheres_numba(origins, dirs, centers, radii, sigmas, colors, background):
    n_rays = origins.shape[0]
    k = centers.shape[0]
    out = np.empty((n_rays, 3))
    t0 = np.zeros(k)
    t1 = np.zeros(k)
    bounds = np.zeros(2 * k)
    for r in range(n_rays):
        for s in range(k):
            ocx = origins[r, 0] - centers[s, 0]
            ocy = origins[r, 1] - centers[s, 1]
            ocz = origins[r, 2] - centers[s, 2]
            b = ocx * dirs[r, 0] + ocy * dirs[r, 1] + ocz * dirs[r, 2]
            c = ocx * ocx + ocy * ocy + ocz * ocz - radii[s] * radii[s]
            disc = b * b - c
            root = math.sqrt(disc) if disc > 0 else 0.0
            a0 = max(-b - root, 0.0)
            a1 = max(-b + root, 0.0)
            if disc > 0 and a1 > a0:
                t0[s] = a0
                t1[s] = a1
            else:
                t0[s] = 0.0
                t1[s] = 0.0
            bounds[2 * s] = t0[s]
            bounds[2 * s + 1] = t1[s]
        bounds.sort()
        trans = 1.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for i in range(2 * k - 1):
            lo = bounds[i]
            hi = bounds[i + 1]
            if hi <= lo:
                continue
            mid = 0.5 * (lo + hi)
            st = 0.0
            m0 = 0.0
            m1 = 0.0
            m2 = 0.0
            for s in range(k):
                if t0[s] < mid and mid < t1[s]:
                    st += sigmas[s]
                    m0 += sigmas[s] * colors[s, 0]
                    m1 += sigmas[s] * colors[s, 1]
                    m2 += sigmas[s] * colors[s, 2]
            if st <= 0:
                continue
            alpha = -math.expm1(-st * (hi - lo))
            f = trans * alpha / st
            c0 += f * m0
            c1 += f * m1
            c2 += f * m2
            trans *= 1.0 - alpha
        out[r, 0] = c0 + trans * background[0]
        out[r, 1] = c1 + trans * background[1]
        out[r, 2] = c2 + trans * background[2]
    return out


if USE_NUMBA:
    composite_forward = composite_forward_numba
    composite_backward = composite_backward_numba
    sample_pdf = sample_pdf_numba
    area_resize = area_resize_numba
    render_spheres = render_spheres_numba
else:
    composite_forward = composite_forward_numpy
    composite_backward = composite_backward_numpy
    sample_pdf = sample_pdf_numpy
    area_resize = area_resize_numpy
    render_spheres = render_spheres_numpy
