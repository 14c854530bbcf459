"""Dataset construction: from a nature-value raster to extracted samples.

The chain is: threshold the class band, clean it with a morphological
opening, keep 4-connected components above a minimum area, trace their
boundary polygons, lay out non-overlapping circular samples on a jittered
lattice, split patch-wise into train/val/test, then cut image windows and
plot point clouds for every sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import las_io
from .core import (
    CLASSES,
    Grid,
    ORTHO_GSD_M,
    PATCH_SIZE_PX,
    PLOT_DIAMETER_M,
    PLOT_RADIUS_M,
    circle_mask,
    disc_element,
    nature_value_label,
    ring_area,
)
from .errors import (
    DegenerateSplit,
    MissingInput,
    NoData,
    OutOfBounds,
    PatchResolutionMismatch,
)
from .raster_io import Raster, read_gtiff
from .rng import Rng

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
MIN_PATCH_AREA_M2 = 5000.0  # 0.5 ha
DEFAULT_YEARS = (2019, 2020, 2021, 2022, 2023)


@dataclass
class DatasetConfig:
    seed: int = 0
    open_radius_m: float = 15.0
    min_area_m2: float = MIN_PATCH_AREA_M2
    spacing_m: float = PLOT_DIAMETER_M
    years: tuple[int, ...] = DEFAULT_YEARS
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS
    plot_radius_m: float = PLOT_RADIUS_M
    cloud_points: int = 8192


@dataclass
class Patch:
    """One connected habitat polygon."""

    patch_id: str
    label: str
    year: int
    grid: Grid
    row0: int
    col0: int
    mask: np.ndarray  # bool over the patch bounding box
    rings: list[list[tuple[float, float]]] = field(default_factory=list)
    split: str = ""

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    @property
    def area_m2(self) -> float:
        return self.pixel_count * self.grid.pixel_size ** 2

    def contains_cell(self, row: int, col: int) -> bool:
        r, c = row - self.row0, col - self.col0
        if r < 0 or c < 0 or r >= self.mask.shape[0] or c >= self.mask.shape[1]:
            return False
        return bool(self.mask[r, c])

    def bbox_world(self) -> tuple[float, float, float, float]:
        """(e_min, n_min, e_max, n_max) of the pixel bounding box."""
        g = self.grid
        h, w = self.mask.shape
        e_min = g.origin_e + self.col0 * g.pixel_size
        n_max = g.origin_n - self.row0 * g.pixel_size
        return (e_min, n_max - h * g.pixel_size,
                e_min + w * g.pixel_size, n_max)


@dataclass
class Sample:
    sample_id: str
    patch_id: str
    label: str
    year: int
    split: str
    easting: float
    northing: float


# --- raster to patches ----------------------------------------------------

def threshold_mask(data: np.ndarray, label: str,
                   nodata: int | float | None = None) -> np.ndarray:
    """True where the raster value maps to the requested class."""
    out = np.zeros(data.shape, dtype=bool)
    flat = data
    for v in np.unique(flat):
        if nodata is not None and v == nodata:
            continue
        if nature_value_label(int(v)) == label:
            out |= flat == v
    return out


def open_mask(mask: np.ndarray, radius_m: float, pixel_size: float) -> np.ndarray:
    """Morphological opening with a pixelated disc; border counts as outside."""
    r_px = math.ceil(radius_m / pixel_size)
    if r_px <= 0:
        return mask.copy()
    elem = disc_element(r_px)
    eroded = ndimage.binary_erosion(mask, structure=elem, border_value=0)
    return ndimage.binary_dilation(eroded, structure=elem, border_value=0)


def connected_components(mask: np.ndarray,
                         min_area_m2: float,
                         pixel_size: float) -> list[tuple[int, int, np.ndarray]]:
    """4-connected components meeting the area floor, in scan order.

    Returns (row0, col0, submask) triples over each component's bbox.
    """
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    labels, n = ndimage.label(mask, structure=structure)
    out = []
    min_pixels = min_area_m2 / (pixel_size * pixel_size)
    slices = ndimage.find_objects(labels)
    for k in range(1, n + 1):
        sl = slices[k - 1]
        sub = labels[sl] == k
        if sub.sum() >= min_pixels:
            out.append((sl[0].start, sl[1].start, sub))
    return out


# --- boundary tracing -----------------------------------------------------

# corner-lattice step vectors: east, north, west, south (screen rows grow south)
_E, _N, _W, _S = (1, 0), (0, -1), (-1, 0), (0, 1)
_LEFT_OF = {_E: _N, _N: _W, _W: _S, _S: _E}
_RIGHT_OF = {v: k for k, v in _LEFT_OF.items()}


def trace_rings(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """Boundary rings of a pixel set as corner-lattice (col, row) vertices.

    Each exposed pixel edge becomes a directed segment with the interior on
    its left in world coordinates (easting right, northing up), so outer
    rings come out counter-clockwise and holes clockwise.  At pinch corners
    the walk prefers the left turn, which keeps every ring simple.
    """
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    inside = padded[1:-1, 1:-1]
    edges: dict[tuple[int, int], dict[tuple[int, int], tuple[int, int]]] = {}

    def add(start: tuple[int, int], dirn: tuple[int, int]) -> None:
        edges.setdefault(start, {})[dirn] = (start[0] + dirn[0], start[1] + dirn[1])

    rows, cols = np.nonzero(inside & ~padded[2:, 1:-1])  # open to the south
    for r, c in zip(rows.tolist(), cols.tolist()):
        add((c, r + 1), _E)
    rows, cols = np.nonzero(inside & ~padded[1:-1, 2:])  # open to the east
    for r, c in zip(rows.tolist(), cols.tolist()):
        add((c + 1, r + 1), _N)
    rows, cols = np.nonzero(inside & ~padded[:-2, 1:-1])  # open to the north
    for r, c in zip(rows.tolist(), cols.tolist()):
        add((c + 1, r), _W)
    rows, cols = np.nonzero(inside & ~padded[1:-1, :-2])  # open to the west
    for r, c in zip(rows.tolist(), cols.tolist()):
        add((c, r), _S)

    rings: list[list[tuple[int, int]]] = []
    dir_rank = {_E: 0, _S: 1, _W: 2, _N: 3}
    while edges:
        start = min(edges, key=lambda v: (v[1], v[0]))
        dirn = min(edges[start], key=dir_rank.get)
        ring_steps: list[tuple[tuple[int, int], tuple[int, int]]] = []
        v, d = start, dirn
        while True:
            nxt = edges[v].pop(d)
            if not edges[v]:
                del edges[v]
            ring_steps.append((v, d))
            v = nxt
            if v == start:
                # the turn preference pairs arrivals with departures, so the
                # first return to the start always closes this ring exactly
                break
            options = edges.get(v)
            if not options:
                raise AssertionError("boundary walk left the edge set")
            for cand in (_LEFT_OF[d], d, _RIGHT_OF[d]):
                if cand in options:
                    d = cand
                    break
            else:
                raise AssertionError("boundary walk has no continuation")
        verts = [s[0] for s in ring_steps]
        k = min(range(len(verts)), key=lambda i: (verts[i][1], verts[i][0]))
        verts = verts[k:] + verts[:k]
        # merge collinear runs, including across the rotation seam
        slim: list[tuple[int, int]] = []
        n = len(verts)
        for i in range(n):
            prev_d = (verts[i][0] - verts[i - 1][0], verts[i][1] - verts[i - 1][1])
            next_d = (verts[(i + 1) % n][0] - verts[i][0],
                      verts[(i + 1) % n][1] - verts[i][1])
            if prev_d != next_d:
                slim.append(verts[i])
        slim.append(slim[0])
        rings.append(slim)
    rings.sort(key=lambda ring: (ring[0][1], ring[0][0]))
    return rings


def rings_to_world(rings: list[list[tuple[int, int]]], grid: Grid,
                   row0: int, col0: int) -> list[list[tuple[float, float]]]:
    ps = grid.pixel_size
    out = []
    for ring in rings:
        out.append([(grid.origin_e + (col0 + c) * ps,
                     grid.origin_n - (row0 + r) * ps) for c, r in ring])
    return out


def polygon_area(rings: list[list[tuple[float, float]]]) -> float:
    """Total area: outer rings count positive, holes negative."""
    return sum(ring_area(r) for r in rings)


# --- sample placement -----------------------------------------------------

def place_samples(patch: Patch, spacing: float, radius: float,
                  rng: Rng) -> list[tuple[float, float]]:
    """Jittered-lattice centres whose full disc lies inside the patch.

    The lattice pitch equals `spacing` in both axes, so with spacing at
    least one diameter no two accepted discs overlap.  The jitter is one
    uniform draw per axis in [0, spacing).
    """
    e_min, n_min, e_max, n_max = patch.bbox_world()
    je = rng.uniform(0.0, spacing)
    jn = rng.uniform(0.0, spacing)
    g = patch.grid
    ps = g.pixel_size
    out = []
    n = n_min + jn
    while n <= n_max:
        e = e_min + je
        while e <= e_max:
            if _disc_inside(patch, e, n, radius, ps):
                out.append((e, n))
            e += spacing
        n += spacing
    return out


def _disc_inside(patch: Patch, ce: float, cn: float, radius: float,
                 ps: float) -> bool:
    """True when every cell overlapping the open disc belongs to the patch."""
    g = patch.grid
    c_lo = math.floor((ce - radius - g.origin_e) / ps)
    c_hi = math.floor((ce + radius - g.origin_e) / ps)
    r_lo = math.floor((g.origin_n - (cn + radius)) / ps)
    r_hi = math.floor((g.origin_n - (cn - radius)) / ps)
    r2 = radius * radius
    for row in range(r_lo, r_hi + 1):
        cell_n_hi = g.origin_n - row * ps
        cell_n_lo = cell_n_hi - ps
        dn = max(cell_n_lo - cn, 0.0, cn - cell_n_hi)
        for col in range(c_lo, c_hi + 1):
            cell_e_lo = g.origin_e + col * ps
            de = max(cell_e_lo - ce, 0.0, ce - (cell_e_lo + ps))
            if de * de + dn * dn < r2 and not patch.contains_cell(row, col):
                return False
    return True


# --- splitting ------------------------------------------------------------

def split_patches(patches: list[Patch], sample_counts: dict[str, int],
                  fractions: tuple[float, float, float] = SPLIT_FRACTIONS,
                  allow_degenerate: bool = False) -> None:
    """Assign train/val/test per patch, stratified by class label.

    Patches are handed out greedily, heaviest first, to the split with the
    largest remaining sample deficit; a guard keeps every split non-empty
    per label.  Labels with fewer than three patches raise DegenerateSplit
    unless allow_degenerate is set, in which case they all train.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    for label in CLASSES:
        group = [p for p in patches if p.label == label]
        if not group:
            continue
        if len(group) < len(SPLITS):
            if not allow_degenerate:
                raise DegenerateSplit(
                    f"label {label!r} has {len(group)} patches; "
                    f"need at least {len(SPLITS)} for a patch-level split")
            for p in group:
                p.split = "train"
            continue
        group.sort(key=lambda p: (-sample_counts.get(p.patch_id, 0), p.patch_id))
        total = sum(sample_counts.get(p.patch_id, 0) for p in group)
        deficit = {s: f * total for s, f in zip(SPLITS, fractions)}
        empty = set(SPLITS)
        for i, p in enumerate(group):
            remaining = len(group) - i
            if empty and remaining <= len(empty):
                pool = [s for s in SPLITS if s in empty]
            else:
                pool = list(SPLITS)
            chosen = max(pool, key=lambda s: (deficit[s], -SPLITS.index(s)))
            p.split = chosen
            deficit[chosen] -= sample_counts.get(p.patch_id, 0)
            empty.discard(chosen)


# --- manifest -------------------------------------------------------------

MANIFEST_FIELDS = ("id", "easting", "northing", "year", "label",
                   "patch_id", "split")


def build_patches(raster: Raster, cfg: DatasetConfig) -> list[Patch]:
    """Threshold, open, and trace both classes; years drawn per patch."""
    patches: list[Patch] = []
    nd = raster.nodata
    for label in CLASSES:
        mask = threshold_mask(raster.data, label, nodata=nd)
        opened = open_mask(mask, cfg.open_radius_m, raster.grid.pixel_size)
        comps = connected_components(opened, cfg.min_area_m2,
                                     raster.grid.pixel_size)
        for idx, (row0, col0, sub) in enumerate(comps):
            year_rng = Rng.stream(cfg.seed, f"patch-year:{label}:{idx}")
            year = cfg.years[year_rng.below(len(cfg.years))]
            patch_id = f"{label}_{year}_{idx}"
            rings = rings_to_world(trace_rings(sub), raster.grid, row0, col0)
            patches.append(Patch(patch_id=patch_id, label=label, year=year,
                                 grid=raster.grid, row0=row0, col0=col0,
                                 mask=sub, rings=rings))
    return patches


def build_manifest(raster: Raster,
                   cfg: DatasetConfig) -> tuple[list[Patch], list[Sample]]:
    patches = build_patches(raster, cfg)
    centers: dict[str, list[tuple[float, float]]] = {}
    counts: dict[str, int] = {}
    for p in patches:
        rng = Rng.stream(cfg.seed, f"place:{p.patch_id}")
        pts = place_samples(p, cfg.spacing_m, cfg.plot_radius_m, rng)
        centers[p.patch_id] = pts
        counts[p.patch_id] = len(pts)
    split_patches(patches, counts, cfg.fractions, allow_degenerate=True)
    samples: list[Sample] = []
    for p in patches:
        for i, (e, n) in enumerate(centers[p.patch_id]):
            samples.append(Sample(
                sample_id=f"{p.patch_id}_{i:04d}", patch_id=p.patch_id,
                label=p.label, year=p.year, split=p.split,
                easting=e, northing=n))
    return patches, samples


def write_manifest(samples: list[Sample], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for s in samples:
            w.writerow([s.sample_id, f"{s.easting:.3f}", f"{s.northing:.3f}",
                        s.year, s.label, s.patch_id, s.split])


def read_manifest(path: str | Path) -> list[Sample]:
    p = Path(path)
    if not p.exists():
        raise MissingInput(str(p), "manifest")
    out = []
    with open(p, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(Sample(
                sample_id=row["id"], patch_id=row["patch_id"],
                label=row["label"], year=int(row["year"]), split=row["split"],
                easting=float(row["easting"]), northing=float(row["northing"])))
    return out


def write_patch_geojson(patches: list[Patch], counts: dict[str, int],
                        path: str | Path) -> None:
    """GeoJSON FeatureCollection; outer rings are counter-clockwise."""
    import json

    features = []
    for p in patches:
        features.append({
            "type": "Feature",
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[round(e, 3), round(n, 3)] for e, n in ring]
                                for ring in p.rings],
            },
            "properties": {
                "patch_id": p.patch_id, "label": p.label, "year": p.year,
                "split": p.split, "pixels": p.pixel_count,
                "area_m2": round(p.area_m2, 1),
                "samples": counts.get(p.patch_id, 0),
            },
        })
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


# --- extraction -----------------------------------------------------------

def extract_window(raster: Raster, center_e: float, center_n: float,
                   size: int = PATCH_SIZE_PX,
                   expected_gsd: float = ORTHO_GSD_M) -> tuple[np.ndarray, Grid]:
    """Cut a size x size window whose centre pixel holds the given point.

    The window is anchored so the cell containing (center_e, center_n)
    lands at local (size//2, size//2).  Raises OutOfBounds when any part
    of the window falls outside the raster.
    """
    g = raster.grid
    if abs(g.pixel_size - expected_gsd) > 1e-9:
        raise PatchResolutionMismatch(
            f"raster resolution {g.pixel_size} m, expected {expected_gsd} m")
    row, col = g.world_to_cell(center_e, center_n)
    half = size // 2
    r0, c0 = row - half, col - half
    if r0 < 0 or c0 < 0 or r0 + size > g.height or c0 + size > g.width:
        raise OutOfBounds(
            f"window for ({center_e:.2f}, {center_n:.2f}) spans rows "
            f"{r0}..{r0 + size - 1}, cols {c0}..{c0 + size - 1} of a "
            f"{g.height}x{g.width} raster")
    window = raster.data[r0:r0 + size, c0:c0 + size].copy()
    wgrid = Grid(origin_e=g.origin_e + c0 * g.pixel_size,
                 origin_n=g.origin_n - r0 * g.pixel_size,
                 pixel_size=g.pixel_size, width=size, height=size)
    return window, wgrid


def extract_plot_image(raster: Raster, center_e: float, center_n: float,
                       size: int = PATCH_SIZE_PX,
                       radius_m: float = PLOT_RADIUS_M) -> tuple[np.ndarray, Grid]:
    """Window plus circular mask; pixels outside the plot are zeroed."""
    window, wgrid = extract_window(raster, center_e, center_n, size=size)
    mask = circle_mask(size, radius_m, raster.grid.pixel_size)
    if raster.nodata is not None and window.ndim == 2:
        if np.any(window[mask] == raster.nodata):
            raise NoData(f"masked window at ({center_e:.2f}, {center_n:.2f}) "
                         "contains nodata pixels")
    if window.ndim == 3:
        window[~mask, :] = 0
    else:
        window[~mask] = 0
    return window, wgrid


def write_world_file(grid: Grid, path: str | Path) -> None:
    """Six-line affine sidecar; anchor is the centre of the top-left pixel."""
    ps = grid.pixel_size
    lines = [f"{ps:.8f}", "0.00000000", "0.00000000", f"{-ps:.8f}",
             f"{grid.origin_e + ps / 2:.8f}", f"{grid.origin_n - ps / 2:.8f}"]
    Path(path).write_text("\n".join(lines) + "\n")


def normalize_cloud(cloud: las_io.PointCloud, center_e: float,
                    center_n: float) -> np.ndarray:
    """(n, 3) float array: xy relative to the plot centre, z above minimum."""
    z0 = float(cloud.z.min())
    return np.stack([cloud.x - center_e, cloud.y - center_n,
                     cloud.z - z0], axis=1)


def write_xyz(points: np.ndarray, path: str | Path) -> None:
    with open(path, "w") as fh:
        for x, y, z in points:
            fh.write(f"{x:.3f} {y:.3f} {z:.3f}\n")


def extract_sample(sample: Sample, ortho: Raster, tiles_dir: str | Path,
                   out_images: Path, out_clouds: Path,
                   cfg: DatasetConfig) -> None:
    from PIL import Image

    window, wgrid = extract_plot_image(ortho, sample.easting, sample.northing,
                                       radius_m=cfg.plot_radius_m)
    img = Image.fromarray(window)
    img.save(out_images / f"{sample.sample_id}.png")
    write_world_file(wgrid, out_images / f"{sample.sample_id}.pgw")

    cloud, sources = las_io.crop_circle(tiles_dir, sample.year,
                                        sample.easting, sample.northing,
                                        radius=cfg.plot_radius_m)
    rng = Rng.stream(cfg.seed, f"cloud:{sample.sample_id}")
    sub = las_io.subsample(cloud, cfg.cloud_points, rng)
    las_io.write_las(sub, out_clouds / f"{sample.sample_id}.las")
    write_xyz(normalize_cloud(sub, sample.easting, sample.northing),
              out_clouds / f"{sample.sample_id}.xyz")


def extract_all(samples: list[Sample], ortho_dir: str | Path,
                tiles_dir: str | Path, out_dir: str | Path,
                cfg: DatasetConfig, jobs: int = 1
                ) -> list[tuple[str, str]]:
    """Extract every sample; ortho rasters are cached per year.

    Per-sample failures (missing tiles, windows off the raster, ...) do
    not abort the run; they come back as (sample_id, reason) pairs.  Work
    is deterministic per sample because all randomness keys on the sample
    id, so a thread pool cannot change any output byte.
    """
    from .errors import BioVistaError

    out_dir = Path(out_dir)
    out_images = out_dir / "images"
    out_clouds = out_dir / "clouds"
    out_images.mkdir(parents=True, exist_ok=True)
    out_clouds.mkdir(parents=True, exist_ok=True)
    ortho_dir = Path(ortho_dir)
    orthos: dict[int, Raster] = {}
    for year in sorted({s.year for s in samples}):
        path = ortho_dir / f"{year}.tif"
        if not path.exists():
            raise MissingInput(str(path), "orthophoto")
        orthos[year] = read_gtiff(path)

    def work(s: Sample) -> tuple[str, str] | None:
        try:
            extract_sample(s, orthos[s.year], tiles_dir, out_images,
                           out_clouds, cfg)
            return None
        except BioVistaError as exc:
            return (s.sample_id, f"{exc.name}: {exc}")

    if jobs <= 1:
        results = [work(s) for s in samples]
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, samples))
    return [r for r in results if r is not None]
