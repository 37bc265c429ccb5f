import gzip
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from condfield.data import (IdxFormatError, SceneSpec, Sphere, TiledMnistSpec, digit_layout,
                            generate_multiview, holdout_split, load_image, load_mnist_idx,
                            load_multiview, make_tiled_mnist, mean_psnr, psnr, random_scene,
                            read_idx_images, read_ppm, save_image, save_multiview,
                            sklearn_digit_pool, tiled_batch, write_idx_images, write_ppm)


def distinct_pool(n, glyph=2, seed=0):
    return np.random.default_rng(seed).random((n, glyph, glyph))


# ---------------------------------------------------------------- tiled digits

def test_u1_cells_identical():
    spec = TiledMnistSpec(distinct_pool(50), grid=16, glyph=2, unique=1)
    img = make_tiled_mnist(spec, 3)
    cells = img.reshape(16, 2, 16, 2).transpose(0, 2, 1, 3).reshape(256, 2, 2)
    assert np.all(cells == cells[0])


def test_u16_blocks_internally_identical():
    spec = TiledMnistSpec(distinct_pool(500), grid=16, glyph=2, unique=16)
    layout = digit_layout(spec, 7)
    blocks = layout.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)
    assert np.all(blocks == blocks[:, :1])
    assert spec.block == 4


def test_u256_duplicate_rate_matches_birthday_bound():
    k, n_img = 1000, 60
    spec = TiledMnistSpec(distinct_pool(k), grid=16, glyph=2, unique=256, seed=5)
    pairs = []
    for i in range(n_img):
        _, counts = np.unique(digit_layout(spec, i), return_counts=True)
        pairs.append((counts * (counts - 1) // 2).sum())
    expected = 256 * 255 / 2 / k
    assert abs(np.mean(pairs) - expected) < 4 * np.sqrt(expected / n_img)


def test_tiled_determinism_and_streams():
    spec = TiledMnistSpec(distinct_pool(300), grid=4, glyph=2, unique=16, seed=2)
    np.testing.assert_array_equal(make_tiled_mnist(spec, 11), make_tiled_mnist(spec, 11))
    assert not np.array_equal(make_tiled_mnist(spec, 11), make_tiled_mnist(spec, 11, stream=1))
    batch = tiled_batch(spec, [0, 1])
    assert batch.shape == (2, 8, 8, 3) and np.all(batch[..., 0] == batch[..., 2])


@pytest.mark.parametrize("kw", [dict(pool=np.zeros((0, 2, 2))), dict(unique=8), dict(unique=9),
                                dict(glyph=3)])
def test_tiled_spec_validation(kw):
    args = dict(pool=distinct_pool(10), grid=4, glyph=2, unique=4)
    args.update(kw)
    with pytest.raises(ValueError):
        TiledMnistSpec(**args)


def test_sklearn_pool_range_and_size():
    pool = sklearn_digit_pool(8)
    assert pool.shape == (1797, 8, 8)
    assert pool.min() == 0.0 and pool.max() == 1.0
    assert sklearn_digit_pool(4).shape == (1797, 4, 4)


# ---------------------------------------------------------------- IDX

def test_idx_round_trip_and_resize(tmp_path, rng):
    raw = rng.integers(0, 256, (5, 28, 28), dtype=np.uint8)
    write_idx_images(tmp_path / "a.idx", raw)
    np.testing.assert_array_equal(read_idx_images(tmp_path / "a.idx"), raw)
    pool = load_mnist_idx(tmp_path / "a.idx", glyph=14)
    expect = raw.astype(float).reshape(5, 14, 2, 14, 2).mean(axis=(2, 4)) / 255
    np.testing.assert_allclose(pool, expect, atol=1e-12)


def test_idx_gzip(tmp_path):
    raw = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    write_idx_images(tmp_path / "a.idx", raw)
    (tmp_path / "a.idx.gz").write_bytes(gzip.compress((tmp_path / "a.idx").read_bytes()))
    np.testing.assert_array_equal(read_idx_images(tmp_path / "a.idx.gz"), raw)


def test_idx_zero_digits_are_black(tmp_path):
    write_idx_images(tmp_path / "z.idx", np.zeros((10, 28, 28), np.uint8))
    pool = load_mnist_idx(tmp_path / "z.idx", glyph=16)
    assert pool.shape == (10, 16, 16) and not pool.any()


def test_idx_header_only_fails_at_offset_16(tmp_path):
    (tmp_path / "h.idx").write_bytes(struct.pack(">IIII", 0x803, 60000, 28, 28))
    with pytest.raises(IdxFormatError) as info:
        read_idx_images(tmp_path / "h.idx")
    assert info.value.offset == 16 and "offset 16" in str(info.value)


def test_idx_bad_magic_and_short_header(tmp_path):
    (tmp_path / "m.idx").write_bytes(struct.pack(">IIII", 0x801, 1, 1, 1) + b"\0")
    with pytest.raises(IdxFormatError) as info:
        read_idx_images(tmp_path / "m.idx")
    assert info.value.offset == 0
    (tmp_path / "s.idx").write_bytes(b"\0\0\x08")
    with pytest.raises(IdxFormatError) as info:
        read_idx_images(tmp_path / "s.idx")
    assert info.value.offset == 3


# ---------------------------------------------------------------- metrics

def test_psnr_examples():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a) == float("inf")
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a + 1.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        psnr(a, np.zeros((4, 3, 3)))
    assert mean_psnr([a, a], [a + 0.1, a + 0.1]) == pytest.approx(20.0)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (3, 4), elements=st.floats(0, 1)),
       hnp.arrays(np.float64, (3, 4), elements=st.floats(0, 1)))
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)


# ---------------------------------------------------------------- image files

@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_image_round_trip_is_exact_at_8_bits(tmp_path, rng, ext):
    img = rng.integers(0, 256, (5, 7, 3)) / 255.0
    save_image(tmp_path / f"x{ext}", img)
    np.testing.assert_allclose(load_image(tmp_path / f"x{ext}"), img, atol=1e-12)


def test_ppm_clamps_and_reads_comments(tmp_path):
    write_ppm(tmp_path / "c.ppm", np.array([[[-0.5, 0.5, 2.0]]]))
    np.testing.assert_allclose(read_ppm(tmp_path / "c.ppm")[0, 0], [0, 128 / 255, 1])
    body = (tmp_path / "c.ppm").read_bytes().split(b"\n", 1)
    (tmp_path / "d.ppm").write_bytes(body[0] + b"\n# made by hand\n" + body[1])
    np.testing.assert_array_equal(read_ppm(tmp_path / "d.ppm"), read_ppm(tmp_path / "c.ppm"))


# ---------------------------------------------------------------- multiview

def test_empty_scene_views_equal_background():
    scene = generate_multiview(SceneSpec([], background=(0.2, 0.3, 0.4)), 5, 6)
    assert np.all(scene.images == np.array([0.2, 0.3, 0.4]))


def test_centered_sphere_looks_the_same_from_the_ring():
    spec = SceneSpec([Sphere((0.0, 0.0, 0.0), 0.6, 50.0, (0.8, 0.2, 0.1))])
    scene = generate_multiview(spec, 8, 12)
    for img in scene.images[1:]:
        np.testing.assert_allclose(img, scene.images[0], atol=1e-9)
    assert scene.images[0].max() > 0.5


def test_holdout_counts_and_partition():
    train, test = holdout_split(97)
    assert len(test) == 9 and len(train) == 88
    assert set(train).isdisjoint(test) and set(train) | set(test) == set(range(97))
    assert len(holdout_split(5)[1]) == 0


def test_generated_views_are_reproducible():
    spec = random_scene(3)
    a = generate_multiview(spec, 6, 8, seed=1)
    b = generate_multiview(random_scene(3), 6, 8, seed=1)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.test_views, b.test_views)


def test_scene_field_matches_spheres():
    spec = SceneSpec([Sphere((0.0, 0.0, 0.0), 0.5, 7.0, (1.0, 0.0, 0.0))])
    rgb, sigma = spec.field(np.array([[0.0, 0.0, 0.1], [0.0, 0.0, 0.9]]))
    np.testing.assert_allclose(sigma, [7.0, 0.0])
    np.testing.assert_allclose(rgb[0], [1, 0, 0])
    with pytest.raises(ValueError):
        SceneSpec([Sphere((0.9, 0.0, 0.0), 0.5, 1.0, (1, 1, 1))])


def test_multiview_save_load_round_trip(tmp_path):
    scene = generate_multiview(random_scene(0), 10, 8)
    save_multiview(tmp_path, scene)
    back = load_multiview(tmp_path)
    np.testing.assert_allclose(back.images, np.round(np.clip(scene.images, 0, 1) * 255) / 255, atol=1e-12)
    np.testing.assert_array_equal(back.test_views, scene.test_views)
    records = json.loads((tmp_path / "cameras.json").read_text())
    assert records[0]["image"] == "view_0000.png"
    for a, b in zip(scene.cameras, back.cameras):
        np.testing.assert_allclose(a.pose, b.pose)
