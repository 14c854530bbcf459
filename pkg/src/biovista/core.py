"""Shared geometry and labelling primitives.

Pixel convention used throughout: a raster cell (row, col) covers the
half-open square [origin_e + col*ps, origin_e + (col+1)*ps) easting and
(origin_n - (row+1)*ps, origin_n - row*ps] northing, with origin at the
top-left corner of cell (0, 0).  Rows increase southward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Field plot geometry: 15 m radius circle, nominally ~707 m^2.
PLOT_RADIUS_M = 15.0
PLOT_DIAMETER_M = 2.0 * PLOT_RADIUS_M

# Extracted image patch: 240 px at 12.5 cm ground sampling distance = 30 m.
PATCH_SIZE_PX = 240
ORTHO_GSD_M = 0.125

# Point density target for a subsampled plot cloud.
CLOUD_POINTS = 8192

# Class order is fixed: column/index 0 is low, 1 is high.
CLASSES = ("low", "high")

LOW_VALUES = frozenset({1, 2, 3})
HIGH_VALUES = frozenset({8, 9, 10})


def class_index(label: str) -> int:
    try:
        return CLASSES.index(label)
    except ValueError:
        raise ValueError(f"unknown class label {label!r}") from None


def nature_value_label(value: int) -> str | None:
    """Map a 0-11 nature-value score to 'low'/'high', or None if excluded."""
    if value in LOW_VALUES:
        return "low"
    if value in HIGH_VALUES:
        return "high"
    return None


@dataclass(frozen=True)
class Grid:
    """North-up raster georeference (square pixels, no rotation)."""

    origin_e: float  # easting of the top-left corner
    origin_n: float  # northing of the top-left corner
    pixel_size: float  # metres per pixel, > 0
    width: int
    height: int

    def world_to_cell(self, e: float, n: float) -> tuple[int, int]:
        """(row, col) of the cell containing (e, n); may be out of bounds."""
        col = math.floor((e - self.origin_e) / self.pixel_size)
        row = math.floor((self.origin_n - n) / self.pixel_size)
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        e = self.origin_e + (col + 0.5) * self.pixel_size
        n = self.origin_n - (row + 0.5) * self.pixel_size
        return e, n

    def contains_cell(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


def circle_mask(size: int = PATCH_SIZE_PX,
                radius_m: float = PLOT_RADIUS_M,
                pixel_size: float = ORTHO_GSD_M) -> np.ndarray:
    """Boolean disc about the geometric centre of a size x size window.

    A pixel is inside when its centre lies within radius_m (closed) of the
    window centre.  For even sizes the centre sits on a pixel corner, which
    makes the mask symmetric under any axis flip or 90 degree rotation.
    """
    half = size / 2.0
    c = (np.arange(size, dtype=np.float64) + 0.5 - half) * pixel_size
    d2 = c[:, None] ** 2 + c[None, :] ** 2
    return d2 <= radius_m * radius_m


def disc_element(radius_px: int) -> np.ndarray:
    """Structuring element {(di,dj): di^2 + dj^2 <= r^2} as a bool array."""
    if radius_px < 0:
        raise ValueError("radius_px must be >= 0")
    r = np.arange(-radius_px, radius_px + 1, dtype=np.int64)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius_px * radius_px


def ring_area(ring: list[tuple[float, float]]) -> float:
    """Signed shoelace area; positive for counter-clockwise (x east, y north)."""
    if len(ring) < 3:
        return 0.0
    pts = ring[:-1] if ring[0] == ring[-1] else ring
    a = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def point_in_ring(x: float, y: float, ring: list[tuple[float, float]]) -> bool:
    """Even-odd rule; points exactly on an edge may fall either way."""
    pts = ring[:-1] if len(ring) > 1 and ring[0] == ring[-1] else ring
    inside = False
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
            if x < xi:
                inside = not inside
    return inside
