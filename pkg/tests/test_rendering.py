import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condfield.autodiff import Tensor, check_gradients, ops
from condfield.data import psnr
from condfield.decoders import DecoderConfig, build_decoder
from condfield.encoding import Camera, PosEncConfig, Ray, camera_rays
from condfield.rendering import (MIN_DELTA, OutsideBoundsError, SampleSpec, composite,
                                 importance_samples, lightfield_inputs, render_lightfield_ray,
                                 render_lightfield_rays, render_nerf_ray, render_rays,
                                 render_uniform, sample_deltas, stratified_samples)

SIGMA, COLOR, BG = 1.5, np.array([0.9, 0.3, 0.1]), np.array([0.1, 0.2, 0.7])
# chi-square critical value, 19 degrees of freedom, p = 0.01
CHI2_19_P01 = 36.191


def constant_field(sigma=SIGMA, color=COLOR):
    def field(p):
        return Tensor(np.broadcast_to(color, p.shape).copy()), Tensor(np.full(p.shape[:-1], float(sigma)))
    return field


def blob_field(p):
    r2 = (p ** 2).sum(-1)
    return Tensor(0.5 + 0.5 * np.sin(2 * p + [0.0, 1.0, 2.0])), Tensor(8 * np.exp(-r2 / 0.2))


AXIS_O, AXIS_D = np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]])
CLOSED_FORM = COLOR * (1 - np.exp(-SIGMA * 2)) + np.exp(-SIGMA * 2) * BG


# ---------------------------------------------------------------- sampling

def test_midpoint_samples_are_evenly_spaced():
    t = stratified_samples(2, SampleSpec(4, 0, 2.0, 6.0), None)
    np.testing.assert_allclose(t, [[2.5, 3.5, 4.5, 5.5]] * 2)


def test_single_coarse_sample_in_range(rng):
    t = stratified_samples(50, SampleSpec(1, 0, 1.0, 3.0), rng)
    assert t.shape == (50, 1) and np.all((t >= 1.0) & (t <= 3.0))


def test_stratified_sorted_and_bounded(rng):
    spec = SampleSpec(16, 0, 0.5, 4.0)
    t = stratified_samples(1000, spec, rng)
    assert np.all((t >= spec.near) & (t <= spec.far))
    assert np.all(np.diff(t, axis=-1) > 0)


def test_sample_spec_validation():
    with pytest.raises(ValueError):
        SampleSpec(8, 4, 3.0, 3.0)
    with pytest.raises(ValueError):
        SampleSpec(0, 4)


def test_deltas_floor_duplicates():
    d = sample_deltas(np.array([[1.0, 1.0, 2.0]]), 3.0)
    np.testing.assert_allclose(d, [[MIN_DELTA, 1.0, 1.0]])


def test_importance_point_mass_stays_in_bin(rng):
    depths = np.linspace(0, 1, 8, endpoint=False)[None].repeat(4, 0)
    w = np.zeros((4, 8))
    w[:, 3] = 2.0
    t = importance_samples(w, depths, 200, rng, 1.0)
    assert np.all((t >= 3 / 8) & (t <= 4 / 8))


def test_importance_zero_weights_fall_back_to_uniform(rng):
    depths = np.linspace(0, 1, 8, endpoint=False)[None]
    t = importance_samples(np.zeros((1, 8)), depths, 10000, rng, 1.0)
    assert np.all(np.isfinite(t))
    counts = np.histogram(t, bins=20, range=(0, 1))[0]
    assert ((counts - 500) ** 2 / 500).sum() < CHI2_19_P01


def test_importance_uniform_weights_match_stratified(rng):
    spec = SampleSpec(20, 0, 2.0, 6.0)
    left_edges = np.linspace(spec.near, spec.far, 21)[None, :-1]
    t = importance_samples(np.full((1, 20), 0.3), left_edges, 10000, rng, spec.far)
    strat = stratified_samples(500, spec, rng).ravel()
    fine = np.histogram(t, bins=20, range=(spec.near, spec.far))[0]
    ref = np.histogram(strat, bins=20, range=(spec.near, spec.far))[0]
    chi2 = ((fine - ref) ** 2 / (fine + ref)).sum()
    assert chi2 < CHI2_19_P01


# ---------------------------------------------------------------- compositing

def test_empty_medium_shows_background(rng):
    color, w = composite(np.zeros((3, 5)), rng.random((3, 5, 3)), np.full((3, 5), 0.1), BG)
    np.testing.assert_allclose(color.data, np.broadcast_to(BG, (3, 3)))
    assert not w.any()


def test_opaque_sample_shows_its_color():
    color, w = composite(np.array([[1e6]]), COLOR[None, None], np.array([[1.0]]), BG)
    np.testing.assert_allclose(color.data[0], COLOR, atol=1e-12)


def test_weights_sum_with_transmittance(rng):
    sigma = rng.uniform(0, 4, (20, 30))
    deltas = rng.uniform(0.01, 0.2, (20, 30))
    _, w = composite(sigma, rng.random((20, 30, 3)), deltas)
    t_final = np.exp(-(sigma * deltas).sum(-1))
    assert np.all(w >= 0) and np.all(w.sum(-1) <= 1 + 1e-12)
    np.testing.assert_allclose(w.sum(-1) + t_final, 1.0, atol=1e-6)


def test_composite_gradients(rng):
    sigma = Tensor(rng.uniform(0.1, 3, (3, 6)), requires_grad=True)
    rgb = Tensor(rng.random((3, 6, 3)), requires_grad=True)
    deltas = rng.uniform(0.05, 0.4, (3, 6))
    g = rng.normal(size=(3, 3))
    err = check_gradients(lambda: ops.sum(ops.mul(composite(sigma, rgb, deltas, BG)[0], g)), [sigma, rgb])
    assert err < 1e-4


def test_constant_density_closed_form():
    out = render_rays(constant_field(), AXIS_O, AXIS_D, SampleSpec(512, 0, 0.0, 2.0), None, BG).data[0]
    np.testing.assert_allclose(out, CLOSED_FORM, atol=1e-3)
    exact = render_uniform(constant_field(), AXIS_O, AXIS_D, 0.0, 2.0, 512, BG).data[0]
    np.testing.assert_allclose(exact, CLOSED_FORM, atol=1e-12)


def test_quadrature_error_shrinks_with_samples():
    errs = [np.abs(render_rays(constant_field(), AXIS_O, AXIS_D, SampleSpec(n, 0, 0.0, 2.0), None, BG)
                   .data[0] - CLOSED_FORM).max() for n in (64, 128, 256, 512)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


# ---------------------------------------------------------------- radiance-field rendering

def test_zero_density_renders_background(rng):
    ray = Ray(np.array([0.0, 0.0, -4.0]), np.array([0.0, 0.0, 1.0]))
    out = render_nerf_ray(ray, constant_field(0.0), SampleSpec(16, 8), rng, BG)
    np.testing.assert_array_equal(out, BG)


def test_opaque_field_renders_its_color(rng):
    ray = Ray(np.array([0.0, 0.0, -4.0]), np.array([0.0, 0.0, 1.0]))
    out = render_nerf_ray(ray, constant_field(1e4), SampleSpec(16, 8), rng, BG)
    np.testing.assert_allclose(out, COLOR, atol=1e-3)


def test_hierarchical_matches_brute_force():
    cam = Camera.look_at([0, -3, 1], [0, 0, 0], (0, 0, 1), 16, 16, 40)
    o, d = (a.reshape(-1, 3) for a in camera_rays(cam))
    fast = render_rays(blob_field, o, d, SampleSpec(128, 64, 1.5, 4.5), np.random.default_rng(0)).data
    ref = render_uniform(blob_field, o, d, 1.5, 4.5, 4096).data
    assert psnr(fast, ref) > 40.0


def test_single_network_serves_both_passes(rng):
    calls = []

    def field(p):
        calls.append(p.shape)
        return blob_field(p)
    render_rays(field, np.array([[0.0, -3.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]), SampleSpec(32, 16, 1.0, 5.0), rng)
    assert calls == [(1, 32, 3), (1, 16, 3)]


# ---------------------------------------------------------------- light fields

def _lf_decoder():
    pe = PosEncConfig(2)
    cfg = DecoderConfig("concat", 8, in_dim=pe.out_dim(6), width=16, depth=2, num_splits=1)
    return build_decoder(cfg, seed=0, dtype=np.float64), pe


def test_lightfield_one_evaluation_per_ray(rng):
    dec, pe = _lf_decoder()
    calls = []
    z = rng.normal(size=(1, 8))

    def fn(x):
        calls.append(x.shape)
        return dec(x[None], z)[0]
    o = np.tile([0.0, 0.0, 5.0], (7, 1))
    d = rng.normal(size=(7, 3)) * 0.1 + [0, 0, -1]
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    out = render_lightfield_rays(fn, o, d, 1.0, pe)
    assert calls == [(7, pe.out_dim(6))] and out.shape == (7, 3)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0))
def test_lightfield_colinear_rays_agree(t):
    dec, pe = _lf_decoder()
    z = np.linspace(-1, 1, 8)[None]
    fn = lambda x: dec(x[None], z)[0]  # noqa: E731
    d = np.array([0.3, -0.2, -1.0])
    d /= np.linalg.norm(d)
    o = np.array([0.5, 0.4, 6.0])
    a = render_lightfield_ray(Ray(o, d), fn, 1.0, pe)
    b = render_lightfield_ray(Ray(o + t * d, d), fn, 1.0, pe)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_lightfield_rejects_origin_inside_scene():
    with pytest.raises(OutsideBoundsError):
        lightfield_inputs(np.array([[0.0, 0.0, 0.5]]), np.array([[0.0, 0.0, 1.0]]), 1.0, PosEncConfig(2))


def test_lightfield_gradient_reaches_latent(rng):
    dec, pe = _lf_decoder()
    z = Tensor(rng.normal(size=(1, 8)), requires_grad=True)
    o = np.tile([0.0, 0.0, 5.0], (3, 1))
    d = np.tile([0.0, 0.0, -1.0], (3, 1))
    err = check_gradients(lambda: ops.sum(render_lightfield_rays(lambda x: dec(x[None], z)[0], o, d, 1.0, pe)), [z])
    assert err < 1e-4 and np.abs(z.grad).max() > 0
