"""Training-time augmentation for plot images and plot point clouds.

Image transforms rotate about the window centre, which is also the centre
of the circular plot mask, so the valid disc maps onto itself and the
outside stays zero.  Cloud transforms assume plot-local coordinates (xy
centred on the plot, z relative to the ground minimum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ORTHO_GSD_M, PLOT_RADIUS_M, circle_mask
from .rng import Rng


@dataclass
class Augment2DConfig:
    flip_h: bool = True
    flip_v: bool = True
    max_rotation_deg: float = 45.0
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2


@dataclass
class Augment3DConfig:
    rotate: bool = True
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    jitter_sigma: float = 0.005
    jitter_clip: float = 0.02


def rotate_image(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Bilinear rotation about the window centre; outside fills with 0.

    Exact multiples of 90 degrees reproduce np.rot90 up to rounding
    because sample positions land back on pixel centres.
    """
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    a = math.radians(angle_deg)
    cos_a, sin_a = math.cos(a), math.sin(a)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: where does each output pixel sample from
    dy, dx = rr - cy, cc - cx
    src_r = cy + cos_a * dy - sin_a * dx
    src_c = cx + sin_a * dy + cos_a * dx
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0
    valid = (src_r >= -0.5) & (src_r <= h - 0.5) & (src_c >= -0.5) & (src_c <= w - 0.5)

    def grab(ri, ci):
        inb = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        out = np.zeros(ri.shape + img.shape[2:], dtype=np.float64)
        out[inb] = img[ri[inb], ci[inb]]
        return out

    if img.ndim == 3:
        fr = fr[..., None]
        fc = fc[..., None]
    acc = (grab(r0, c0) * (1 - fr) * (1 - fc)
           + grab(r0, c0 + 1) * (1 - fr) * fc
           + grab(r0 + 1, c0) * fr * (1 - fc)
           + grab(r0 + 1, c0 + 1) * fr * fc)
    acc[~valid] = 0
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(acc), info.min, info.max).astype(img.dtype)
    return acc.astype(img.dtype)


def color_jitter(img: np.ndarray, brightness: float, contrast: float,
                 saturation: float) -> np.ndarray:
    """Multiplicative brightness, contrast about the mean, saturation
    toward per-pixel luma.  Factors of 1.0 are identity."""
    x = img.astype(np.float64)
    x = x * brightness
    mean = x.mean()
    x = mean + (x - mean) * contrast
    if img.ndim == 3 and img.shape[2] == 3:
        luma = (0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2])
        x = luma[..., None] + (x - luma[..., None]) * saturation
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        return np.clip(np.rint(x), info.min, info.max).astype(img.dtype)
    return x.astype(img.dtype)


def augment_image(img: np.ndarray, cfg: Augment2DConfig, rng: Rng,
                  pixel_size: float = ORTHO_GSD_M,
                  radius_m: float = PLOT_RADIUS_M) -> np.ndarray:
    """Draw order: h-flip, v-flip, angle, brightness, contrast, saturation.

    The circular mask is re-applied at the end so interpolation and
    contrast shifts never leak values outside the plot.
    """
    out = img
    if cfg.flip_h and rng.uniform() < 0.5:
        out = out[:, ::-1]
    if cfg.flip_v and rng.uniform() < 0.5:
        out = out[::-1, :]
    if cfg.max_rotation_deg > 0:
        angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
        out = rotate_image(np.ascontiguousarray(out), angle)
    else:
        out = np.ascontiguousarray(out)
    b = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness)
    c = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast)
    s = rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation)
    out = color_jitter(out, b, c, s)
    mask = circle_mask(out.shape[0], radius_m, pixel_size)
    if out.ndim == 3:
        out[~mask, :] = 0
    else:
        out[~mask] = 0
    return out


def rotate_z(points: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate xy about the vertical axis; z is untouched."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    out = points.copy()
    out[:, 0] = c * points[:, 0] - s * points[:, 1]
    out[:, 1] = s * points[:, 0] + c * points[:, 1]
    return out


def augment_cloud(points: np.ndarray, cfg: Augment3DConfig, rng: Rng) -> np.ndarray:
    """Draw order: rotation angle, scale factor, jitter normals (xyz-major).

    Jitter is Gaussian with sigma cfg.jitter_sigma, clipped to
    +/- cfg.jitter_clip per coordinate.
    """
    out = points.astype(np.float64, copy=True)
    if cfg.rotate:
        out = rotate_z(out, rng.uniform(0.0, 2.0 * math.pi))
    out *= rng.uniform(cfg.scale_lo, cfg.scale_hi)
    if cfg.jitter_sigma > 0:
        noise = rng.normals(out.size).reshape(out.shape) * cfg.jitter_sigma
        out += np.clip(noise, -cfg.jitter_clip, cfg.jitter_clip)
    return out
