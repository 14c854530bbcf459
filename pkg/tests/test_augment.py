"""Image and point cloud augmentation behaviour."""

from __future__ import annotations

import math

import numpy as np
import pytest

from biovista.augment import (Augment2DConfig, Augment3DConfig, augment_cloud,
                              augment_image, color_jitter, rotate_image,
                              rotate_z)
from biovista.core import circle_mask
from biovista.rng import Rng, normal_array, uniform_array


def plot_image(size=60, ps=0.5, seed=8):
    """Masked RGB test image as the extractor would hand it over."""
    img = (uniform_array(seed, size * size * 3) * 255).astype(np.uint8)
    img = img.reshape(size, size, 3)
    mask = circle_mask(size, 15.0, ps)
    img[~mask] = 0
    return img


def test_rotate_zero_is_identity():
    img = plot_image()
    assert np.array_equal(rotate_image(img, 0.0), img)


@pytest.mark.parametrize("angle,k", [(90.0, -1), (180.0, 2), (270.0, 1)])
def test_rotate_right_angles_match_rot90(angle, k):
    img = plot_image()
    assert np.array_equal(rotate_image(img, angle), np.rot90(img, k))


def test_rotate_float_image_right_angle():
    img = np.arange(25, dtype=np.float64).reshape(5, 5)
    got = rotate_image(img, 90.0)
    assert np.allclose(got, np.rot90(img, -1), atol=1e-9)


def test_rotate_fills_outside_with_zero():
    img = np.full((21, 21), 200, dtype=np.uint8)
    out = rotate_image(img, 45.0)
    # corners rotate out of the source square
    assert out[0, 0] == 0 and out[0, -1] == 0
    assert out[10, 10] == 200


def test_rotate_preserves_mask_support():
    """Content inside the disc stays inside the disc under any angle."""
    size, ps = 60, 0.5
    img = plot_image(size, ps)
    mask = circle_mask(size, 15.0, ps)
    for angle in (13.0, 33.7, 61.0):
        out = rotate_image(img, angle)
        # everything strictly outside a one-pixel guard band must be zero
        guard = circle_mask(size, 15.0 + 2 * ps, ps)
        assert (out[~guard] == 0).all()
        assert out[mask].sum() > 0


def test_color_jitter_identity():
    img = plot_image()
    assert np.array_equal(color_jitter(img, 1.0, 1.0, 1.0), img)


def test_color_jitter_brightness_scales():
    img = np.full((4, 4, 3), 100, dtype=np.uint8)
    out = color_jitter(img, 1.5, 1.0, 1.0)
    assert (out == 150).all()
    out = color_jitter(img, 0.5, 1.0, 1.0)
    assert (out == 50).all()


def test_color_jitter_contrast_about_mean():
    img = np.array([[[50, 50, 50], [150, 150, 150]]], dtype=np.uint8)
    out = color_jitter(img, 1.0, 0.5, 1.0)
    # mean 100: values move halfway toward it
    assert (out[0, 0] == 75).all() and (out[0, 1] == 125).all()


def test_color_jitter_saturation_toward_luma():
    img = np.zeros((1, 1, 3), dtype=np.uint8)
    img[0, 0] = (200, 0, 0)
    out = color_jitter(img, 1.0, 1.0, 0.0)  # fully desaturated
    luma = round(0.299 * 200)
    assert tuple(out[0, 0]) == (luma, luma, luma)


def test_color_jitter_clips_to_dtype():
    img = np.full((2, 2), 200, dtype=np.uint8)
    assert (color_jitter(img, 2.0, 1.0, 1.0) == 255).all()


def test_augment_image_deterministic_and_masked():
    img = plot_image()
    cfg = Augment2DConfig()
    a = augment_image(img.copy(), cfg, Rng.stream(3, "aug:s1"),
                      pixel_size=0.5)
    b = augment_image(img.copy(), cfg, Rng.stream(3, "aug:s1"),
                      pixel_size=0.5)
    assert np.array_equal(a, b)
    c = augment_image(img.copy(), cfg, Rng.stream(3, "aug:s2"),
                      pixel_size=0.5)
    assert not np.array_equal(a, c)
    mask = circle_mask(60, 15.0, 0.5)
    assert (a[~mask] == 0).all()
    assert a.dtype == np.uint8


def test_augment_image_identity_config():
    img = plot_image()
    cfg = Augment2DConfig(flip_h=False, flip_v=False, max_rotation_deg=0.0,
                          brightness=0.0, contrast=0.0, saturation=0.0)
    out = augment_image(img.copy(), cfg, Rng(0), pixel_size=0.5)
    assert np.array_equal(out, img)


# --- point clouds ------------------------------------------------------------

def make_points(n=200, seed=4):
    pts = normal_array(seed, n * 3).reshape(n, 3) * 5.0
    pts[:, 2] = np.abs(pts[:, 2])
    return pts


def test_rotate_z_preserves_z_and_distances():
    pts = make_points()
    out = rotate_z(pts, 1.234)
    assert np.array_equal(out[:, 2], pts[:, 2])
    assert np.allclose(np.hypot(out[:, 0], out[:, 1]),
                       np.hypot(pts[:, 0], pts[:, 1]), atol=1e-12)
    # full turn comes back
    assert np.allclose(rotate_z(pts, 2 * math.pi), pts, atol=1e-9)


def test_rotate_z_quarter_turn():
    pts = np.array([[1.0, 0.0, 3.0]])
    out = rotate_z(pts, math.pi / 2)
    assert np.allclose(out, [[0.0, 1.0, 3.0]], atol=1e-12)


def test_augment_cloud_pure_scale():
    pts = make_points()
    cfg = Augment3DConfig(rotate=False, scale_lo=1.1, scale_hi=1.1,
                          jitter_sigma=0.0)
    out = augment_cloud(pts, cfg, Rng(9))
    assert np.allclose(out, pts * 1.1, atol=1e-12)


def test_augment_cloud_jitter_bounded():
    pts = make_points()
    cfg = Augment3DConfig(rotate=False, scale_lo=1.0, scale_hi=1.0,
                          jitter_sigma=0.005, jitter_clip=0.02)
    out = augment_cloud(pts, cfg, Rng(9))
    delta = np.abs(out - pts)
    assert delta.max() <= 0.02 + 1e-12
    assert delta.max() > 0.0


def test_augment_cloud_identity_config():
    pts = make_points()
    cfg = Augment3DConfig(rotate=False, scale_lo=1.0, scale_hi=1.0,
                          jitter_sigma=0.0)
    out = augment_cloud(pts, cfg, Rng(9))
    assert np.array_equal(out, pts)


def test_augment_cloud_rigid_plus_scale_preserves_shape():
    pts = make_points()
    cfg = Augment3DConfig(jitter_sigma=0.0)
    out = augment_cloud(pts, cfg, Rng(13))
    # pairwise distances all scale by one common factor in xy; z scales too
    d_in = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
    d_out = np.linalg.norm(out[1:] - out[:-1], axis=1)
    ratio = d_out / d_in
    assert ratio.std() < 1e-9
    assert 0.9 - 1e-9 <= ratio[0] <= 1.1 + 1e-9


def test_augment_cloud_deterministic():
    pts = make_points()
    cfg = Augment3DConfig()
    a = augment_cloud(pts, cfg, Rng.stream(1, "aug3d:x"))
    b = augment_cloud(pts, cfg, Rng.stream(1, "aug3d:x"))
    assert np.array_equal(a, b)
