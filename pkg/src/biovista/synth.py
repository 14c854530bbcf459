"""Deterministic miniature dataset generation for tests and demos.

Everything is derived from counter-based hashes of (seed, name) streams,
so regenerating with one seed is byte-identical, file by file.  Scales
are kept small: a class-score raster of a few hundred pixels, laser
tiles at configurable density, and orthophotos over the same extent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import las_io
from .core import Grid, ORTHO_GSD_M
from .dataset import DatasetConfig, Sample, build_manifest, write_manifest
from .embeddings import (
    EMBED_DIM,
    EmbeddingRecord,
    MOD_2D,
    MOD_3D,
    write_store,
)
from .raster_io import Raster, write_gtiff
from .rng import Rng, derive_seed, hash_u64, normal_array, uniform_array

HNV_NODATA = 255
_LOW_BAND = (1, 2, 3)
_HIGH_BAND = (8, 9, 10)
_BACKGROUND = 5  # a score in the excluded middle band

# readout directions are fixed (independent of SynthSpec.seed) so that
# probabilities are a property of the embedding geometry alone
_READOUT_SEED = 0x42E617


@dataclass
class SynthSpec:
    seed: int = 0
    origin_e: float = 430000.0
    origin_n: float = 6160000.0
    hnv_size_px: int = 60
    hnv_pixel_size: float = 10.0
    # (label, width_px, height_px) rectangles to plant; the default gives
    # each class enough patches for a non-degenerate three-way split
    plan: list[tuple[str, int, int]] = field(default_factory=lambda: [
        ("high", 10, 8), ("low", 10, 8), ("high", 10, 8), ("low", 10, 8),
        ("high", 10, 8), ("low", 10, 8), ("high", 10, 8), ("low", 10, 8),
    ])
    als_density: float = 2.0
    embed_sigma: float = 0.05
    embed_margin: float = 1.0
    embed_gain: float = 8.0
    instances: int = 1

    def extent_m(self) -> float:
        return self.hnv_size_px * self.hnv_pixel_size


def plant_positions(spec: SynthSpec, gap_px: int = 6
                    ) -> list[tuple[str, int, int, int, int]]:
    """Deterministic left-to-right, top-to-bottom packing of the plan.

    Returns (label, row0, col0, h, w) per rectangle.  The gap keeps
    rectangles from merging under the morphological opening.
    """
    size = spec.hnv_size_px
    out = []
    r = gap_px
    c = gap_px
    row_h = 0
    for label, w, h in spec.plan:
        if c + w + gap_px > size:
            c = gap_px
            r += row_h + gap_px
            row_h = 0
        if r + h + gap_px > size or c + w + gap_px > size:
            raise ValueError(
                f"plan rectangle {label} {w}x{h} px does not fit a "
                f"{size}x{size} px raster")
        out.append((label, r, c, h, w))
        c += w + gap_px
        row_h = max(row_h, h)
    return out


def gen_hnv_raster(spec: SynthSpec) -> Raster:
    """Background score 5 with planted rectangles of in-band scores."""
    size = spec.hnv_size_px
    data = np.full((size, size), _BACKGROUND, dtype=np.uint8)
    for i, (label, r0, c0, h, w) in enumerate(plant_positions(spec)):
        band = _HIGH_BAND if label == "high" else _LOW_BAND
        s = derive_seed(spec.seed, f"hnv:{i}")
        picks = hash_u64(np.arange(h * w, dtype=np.uint64), s) % len(band)
        vals = np.asarray(band, dtype=np.uint8)[picks.astype(np.int64)]
        data[r0:r0 + h, c0:c0 + w] = vals.reshape(h, w)
    grid = Grid(origin_e=spec.origin_e, origin_n=spec.origin_n,
                pixel_size=spec.hnv_pixel_size, width=size, height=size)
    return Raster(data=data, grid=grid, nodata=HNV_NODATA)


def gen_las_tile(extent: tuple[float, float, float, float], density: float,
                 seed: int, path: str | Path) -> int:
    """Poisson-count uniform points over extent with a simple z structure.

    Ground follows a gentle plane; about a third of returns sit in a
    5-20 m canopy layer.  Returns the point count written (a zero draw
    still writes a file with one sentinel ground point so the tile stays
    readable; densities in use make that case vanishingly rare).
    """
    e0, n0, e1, n1 = extent
    area = max(0.0, e1 - e0) * max(0.0, n1 - n0)
    lam = density * area
    count = Rng(derive_seed(seed, "count")).poisson(lam)
    n = max(1, count)
    x = e0 + uniform_array(derive_seed(seed, "x"), n) * (e1 - e0)
    y = n0 + uniform_array(derive_seed(seed, "y"), n) * (n1 - n0)
    ground = 40.0 + 0.015 * (x - e0) + 0.008 * (y - n0)
    canopy_sel = uniform_array(derive_seed(seed, "canopy"), n) < 0.35
    canopy_h = 5.0 + 15.0 * uniform_array(derive_seed(seed, "height"), n)
    z = ground + np.where(canopy_sel, canopy_h, 0.0)
    intensity = (hash_u64(np.arange(n, dtype=np.uint64),
                          derive_seed(seed, "intensity")) % 4096).astype(np.uint16)
    classification = np.where(canopy_sel, 5, 2).astype(np.uint8)
    gps = 3600.0 + np.arange(n, dtype=np.float64) * 1e-4
    cloud = las_io.PointCloud(x=x, y=y, z=z, intensity=intensity,
                              classification=classification, gps_time=gps)
    las_io.write_las(cloud, path)
    return count


def gen_orthophoto(extent: tuple[float, float, float, float], seed: int,
                   path: str | Path, pixel_size: float = ORTHO_GSD_M) -> None:
    """RGB GeoTIFF with smooth banded texture plus per-pixel dither."""
    e0, n0, e1, n1 = extent
    width = int(round((e1 - e0) / pixel_size))
    height = int(round((n1 - n0) / pixel_size))
    data = np.empty((height, width, 3), dtype=np.uint8)
    cols = e0 + (np.arange(width, dtype=np.float64) + 0.5) * pixel_size
    block = max(1, 2_000_000 // max(1, width))
    dither_seed = derive_seed(seed, "dither")
    for r0 in range(0, height, block):
        r1 = min(height, r0 + block)
        rows = n1 - (np.arange(r0, r1, dtype=np.float64) + 0.5) * pixel_size
        u = 0.5 + 0.5 * np.sin(rows[:, None] / 23.0) * np.sin(cols[None, :] / 31.0)
        v = 0.5 + 0.5 * np.sin(rows[:, None] / 7.0 + cols[None, :] / 11.0)
        idx = (np.arange(r0 * width, r1 * width, dtype=np.uint64))
        dither = (hash_u64(idx, dither_seed) % 17).astype(np.float64)
        dither = dither.reshape(r1 - r0, width) - 8.0
        chans = [40.0 + 90.0 * u, 70.0 + 80.0 * v, 35.0 + 50.0 * u * v]
        for ch, base in enumerate(chans):
            data[r0:r1, :, ch] = np.clip(base + dither, 0, 255).astype(np.uint8)
    grid = Grid(origin_e=e0, origin_n=n1, pixel_size=pixel_size,
                width=width, height=height)
    write_gtiff(Raster(data=data, grid=grid), path,
                compression="deflate", rows_per_strip=512)


def readout_direction(modality: str, dim: int = EMBED_DIM) -> np.ndarray:
    v = normal_array(derive_seed(_READOUT_SEED, f"readout:{modality}"), dim)
    return v / np.linalg.norm(v)


def gen_embeddings(samples: list[Sample], spec: SynthSpec,
                   dim: int = EMBED_DIM) -> list[EmbeddingRecord]:
    """Class clusters +- margin/2 along a fixed direction, Gaussian noise.

    Probabilities are a logistic readout of the projection onto the same
    direction, so lowering sigma raises per-modality accuracy toward one
    and raising it drives accuracy toward chance.
    """
    records = []
    for s in samples:
        sign = 1.0 if s.label == "high" else -1.0
        for modality in (MOD_2D, MOD_3D):
            u = readout_direction(modality, dim)
            mean = sign * 0.5 * spec.embed_margin * u
            for inst in range(spec.instances):
                noise_seed = derive_seed(
                    spec.seed, f"embed:{s.sample_id}:{modality}:{inst}")
                emb = mean + spec.embed_sigma * normal_array(noise_seed, dim)
                score = spec.embed_gain * float(emb @ u)
                p_high = 1.0 / (1.0 + math.exp(-score))
                records.append(EmbeddingRecord(
                    sample_id=s.sample_id, modality=modality, instance=inst,
                    embedding=emb.astype(np.float32),
                    probs=(1.0 - p_high, p_high)))
    return records


def synth_dataset(spec: SynthSpec, cfg: DatasetConfig,
                  out_dir: str | Path) -> dict[str, int]:
    """Emit the full miniature tree:

        out/hnv.tif  out/orthos/<year>.tif  out/tiles/<year>_<e>_<n>.las
        out/manifest.csv  out/embeddings.bvem

    The manifest is built with the same dataset code the pipeline uses,
    so downstream commands reproduce it exactly from hnv.tif.
    """
    out = Path(out_dir)
    (out / "tiles").mkdir(parents=True, exist_ok=True)
    (out / "orthos").mkdir(parents=True, exist_ok=True)

    raster = gen_hnv_raster(spec)
    write_gtiff(raster, out / "hnv.tif", compression="deflate")

    patches, samples = build_manifest(raster, cfg)
    write_manifest(samples, out / "manifest.csv")

    extent = (spec.origin_e, spec.origin_n - spec.extent_m(),
              spec.origin_e + spec.extent_m(), spec.origin_n)

    cells: dict[int, set[tuple[int, int]]] = {}
    for s in samples:
        needed = las_io.tiles_for_circle(s.easting, s.northing,
                                         cfg.plot_radius_m)
        cells.setdefault(s.year, set()).update(needed)
    n_tiles = 0
    for year in sorted(cells):
        for ekm, nkm in sorted(cells[year]):
            e0 = max(extent[0], ekm * las_io.TILE_SIZE_M)
            n0 = max(extent[1], nkm * las_io.TILE_SIZE_M)
            e1 = min(extent[2], (ekm + 1) * las_io.TILE_SIZE_M)
            n1 = min(extent[3], (nkm + 1) * las_io.TILE_SIZE_M)
            tile_seed = derive_seed(spec.seed, f"tile:{year}:{ekm}:{nkm}")
            gen_las_tile((e0, n0, e1, n1), spec.als_density, tile_seed,
                         out / "tiles" / las_io.tile_name(year, ekm, nkm))
            n_tiles += 1

    for year in sorted({s.year for s in samples}):
        gen_orthophoto(extent, derive_seed(spec.seed, f"ortho:{year}"),
                       out / "orthos" / f"{year}.tif")

    records = gen_embeddings(samples, spec)
    write_store(records, out / "embeddings.bvem")
    return {"patches": len(patches), "samples": len(samples),
            "tiles": n_tiles, "embeddings": len(records)}
