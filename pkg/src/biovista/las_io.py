"""Reading and writing airborne laser scanning tiles (LAS 1.2-1.4).

Little-endian binary layout per the public LAS specification.  Only the
fields the pipeline needs are decoded: scaled coordinates, intensity,
classification, and GPS time where the record format carries one.
Compressed (LAZ) payloads are rejected.

Writing always emits LAS 1.2, point record format 1 (28 bytes), which is
the least common denominator every downstream consumer accepts.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    EmptyCloud,
    MissingTile,
    ScaleOverflow,
    TruncatedFile,
    UnsupportedPointFormat,
    UnsupportedVersion,
)
from .rng import Rng

TILE_SIZE_M = 1000.0

_I32_MIN = -(2 ** 31)
_I32_MAX = 2 ** 31 - 1

# minimum record length per supported point data record format
_MIN_RECLEN = {0: 20, 1: 28, 2: 26, 3: 34, 6: 30}

_HEADER_MIN = 227  # LAS 1.2 header size


@dataclass
class LasHeader:
    version: tuple[int, int]
    point_format: int
    record_length: int
    point_count: int
    offset_to_points: int
    scale: tuple[float, float, float]
    offset: tuple[float, float, float]
    bbox_min: tuple[float, float, float]
    bbox_max: tuple[float, float, float]


@dataclass
class PointCloud:
    """Column-oriented point records; all arrays share one length."""

    x: np.ndarray  # f64, scaled easting
    y: np.ndarray  # f64, scaled northing
    z: np.ndarray  # f64, scaled elevation
    intensity: np.ndarray  # u16
    classification: np.ndarray  # u8
    gps_time: np.ndarray | None = None  # f64 when the source format has it

    def __len__(self) -> int:
        return self.x.shape[0]

    def take(self, idx: np.ndarray) -> "PointCloud":
        return PointCloud(
            x=self.x[idx],
            y=self.y[idx],
            z=self.z[idx],
            intensity=self.intensity[idx],
            classification=self.classification[idx],
            gps_time=None if self.gps_time is None else self.gps_time[idx],
        )


def concat_clouds(clouds: list[PointCloud]) -> PointCloud:
    if not clouds:
        return PointCloud(
            x=np.empty(0), y=np.empty(0), z=np.empty(0),
            intensity=np.empty(0, dtype=np.uint16),
            classification=np.empty(0, dtype=np.uint8),
            gps_time=None,
        )
    have_time = all(c.gps_time is not None for c in clouds)
    return PointCloud(
        x=np.concatenate([c.x for c in clouds]),
        y=np.concatenate([c.y for c in clouds]),
        z=np.concatenate([c.z for c in clouds]),
        intensity=np.concatenate([c.intensity for c in clouds]),
        classification=np.concatenate([c.classification for c in clouds]),
        gps_time=np.concatenate([c.gps_time for c in clouds]) if have_time else None,
    )


def read_header(data: bytes, source: str = "<bytes>") -> LasHeader:
    if len(data) < _HEADER_MIN:
        raise TruncatedFile(f"{source}: {len(data)} bytes is shorter than a LAS header")
    if data[0:4] != b"LASF":
        raise BadMagic(f"{source}: signature {data[0:4]!r} is not LASF")
    major, minor = data[24], data[25]
    if (major, minor) not in ((1, 2), (1, 3), (1, 4)):
        raise UnsupportedVersion(f"{source}: LAS {major}.{minor} not supported")
    header_size = struct.unpack_from("<H", data, 94)[0]
    offset_to_points = struct.unpack_from("<I", data, 96)[0]
    pdrf_raw = data[104]
    if pdrf_raw & 0x80:
        raise UnsupportedPointFormat(f"{source}: compressed (LAZ) payloads not supported")
    point_format = pdrf_raw & 0x3F
    if point_format not in _MIN_RECLEN:
        raise UnsupportedPointFormat(f"{source}: point record format {point_format}")
    record_length = struct.unpack_from("<H", data, 105)[0]
    if record_length < _MIN_RECLEN[point_format]:
        raise UnsupportedPointFormat(
            f"{source}: record length {record_length} below minimum "
            f"{_MIN_RECLEN[point_format]} for format {point_format}")
    count = struct.unpack_from("<I", data, 107)[0]
    sx, sy, sz = struct.unpack_from("<3d", data, 131)
    ox, oy, oz = struct.unpack_from("<3d", data, 155)
    maxx, minx, maxy, miny, maxz, minz = struct.unpack_from("<6d", data, 179)
    if (major, minor) == (1, 4):
        if len(data) < 375 or header_size < 375:
            raise TruncatedFile(f"{source}: LAS 1.4 header shorter than 375 bytes")
        count64 = struct.unpack_from("<Q", data, 247)[0]
        if count64:
            count = count64
    return LasHeader(
        version=(major, minor),
        point_format=point_format,
        record_length=record_length,
        point_count=count,
        offset_to_points=offset_to_points,
        scale=(sx, sy, sz),
        offset=(ox, oy, oz),
        bbox_min=(minx, miny, minz),
        bbox_max=(maxx, maxy, maxz),
    )


def parse_las(data: bytes, source: str = "<bytes>") -> PointCloud:
    hdr = read_header(data, source)
    need = hdr.offset_to_points + hdr.point_count * hdr.record_length
    if len(data) < need:
        raise TruncatedFile(
            f"{source}: need {need} bytes for {hdr.point_count} points, have {len(data)}")
    fields = {
        "names": ["xi", "yi", "zi", "intensity"],
        "formats": ["<i4", "<i4", "<i4", "<u2"],
        "offsets": [0, 4, 8, 12],
        "itemsize": hdr.record_length,
    }
    if hdr.point_format in (0, 1, 2, 3):
        fields["names"].append("cls")
        fields["formats"].append("u1")
        fields["offsets"].append(15)
        time_off = 20 if hdr.point_format in (1, 3) else None
    else:  # format 6
        fields["names"].append("cls")
        fields["formats"].append("u1")
        fields["offsets"].append(16)
        time_off = 22
    if time_off is not None:
        fields["names"].append("gps")
        fields["formats"].append("<f8")
        fields["offsets"].append(time_off)
    raw = np.frombuffer(data, dtype=np.dtype(fields), count=hdr.point_count,
                        offset=hdr.offset_to_points)
    sx, sy, sz = hdr.scale
    ox, oy, oz = hdr.offset
    cls = raw["cls"]
    if hdr.point_format in (0, 1, 2, 3):
        cls = cls & 0x1F  # upper three bits are synthetic/key/withheld flags
    return PointCloud(
        x=raw["xi"].astype(np.float64) * sx + ox,
        y=raw["yi"].astype(np.float64) * sy + oy,
        z=raw["zi"].astype(np.float64) * sz + oz,
        intensity=raw["intensity"].copy(),
        classification=np.ascontiguousarray(cls, dtype=np.uint8),
        gps_time=raw["gps"].astype(np.float64) if time_off is not None else None,
    )


def read_las(path: str | Path) -> PointCloud:
    p = Path(path)
    return parse_las(p.read_bytes(), source=str(p))


def _quantize(values: np.ndarray, scale: float, offset: float,
              axis: str) -> np.ndarray:
    raw = np.rint((values - offset) / scale)
    if raw.size and (raw.min() < _I32_MIN or raw.max() > _I32_MAX):
        raise ScaleOverflow(
            f"{axis} values do not fit int32 at scale {scale} offset {offset}")
    return raw.astype(np.int32)


def write_las(cloud: PointCloud, path: str | Path,
              scale: tuple[float, float, float] = (0.01, 0.01, 0.01),
              offset: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> None:
    """Write as LAS 1.2 point format 1; raw = round((v - offset) / scale)."""
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("refusing to write a cloud with zero points")
    xi = _quantize(cloud.x, scale[0], offset[0], "x")
    yi = _quantize(cloud.y, scale[1], offset[1], "y")
    zi = _quantize(cloud.z, scale[2], offset[2], "z")
    # bbox in header reflects the values a reader will decode
    dx = xi.astype(np.float64) * scale[0] + offset[0]
    dy = yi.astype(np.float64) * scale[1] + offset[1]
    dz = zi.astype(np.float64) * scale[2] + offset[2]

    rec = np.zeros(n, dtype=np.dtype({
        "names": ["xi", "yi", "zi", "intensity", "flags", "cls",
                  "scan_angle", "user", "source", "gps"],
        "formats": ["<i4", "<i4", "<i4", "<u2", "u1", "u1",
                    "i1", "u1", "<u2", "<f8"],
        "offsets": [0, 4, 8, 12, 14, 15, 16, 17, 18, 20],
        "itemsize": 28,
    }))
    rec["xi"] = xi
    rec["yi"] = yi
    rec["zi"] = zi
    rec["intensity"] = cloud.intensity
    rec["flags"] = 0x09  # single return: return 1 of 1
    rec["cls"] = cloud.classification & 0x1F
    rec["gps"] = cloud.gps_time if cloud.gps_time is not None else 0.0

    hdr = bytearray(_HEADER_MIN)
    hdr[0:4] = b"LASF"
    hdr[24] = 1
    hdr[25] = 2
    struct.pack_into("<31s", hdr, 26, b"biovista")  # system identifier
    struct.pack_into("<31s", hdr, 58, b"biovista writer")
    struct.pack_into("<H", hdr, 94, _HEADER_MIN)
    struct.pack_into("<I", hdr, 96, _HEADER_MIN)
    struct.pack_into("<I", hdr, 100, 0)  # no variable length records
    hdr[104] = 1
    struct.pack_into("<H", hdr, 105, 28)
    struct.pack_into("<I", hdr, 107, n)
    struct.pack_into("<I", hdr, 111, n)  # all points are first returns
    struct.pack_into("<3d", hdr, 131, *scale)
    struct.pack_into("<3d", hdr, 155, *offset)
    struct.pack_into("<6d", hdr, 179,
                     float(dx.max()), float(dx.min()),
                     float(dy.max()), float(dy.min()),
                     float(dz.max()), float(dz.min()))
    Path(path).write_bytes(bytes(hdr) + rec.tobytes())


# --- plot assembly -------------------------------------------------------

def tile_name(year: int, ekm: int, nkm: int) -> str:
    return f"{year}_{ekm}_{nkm}.las"


def tiles_for_circle(center_e: float, center_n: float,
                     radius: float) -> list[tuple[int, int]]:
    """1 km grid cells whose closed square intersects the closed disc."""
    cells = []
    e0 = math.floor((center_e - radius) / TILE_SIZE_M)
    e1 = math.floor((center_e + radius) / TILE_SIZE_M)
    n0 = math.floor((center_n - radius) / TILE_SIZE_M)
    n1 = math.floor((center_n + radius) / TILE_SIZE_M)
    for ekm in range(e0, e1 + 1):
        for nkm in range(n0, n1 + 1):
            # distance from centre to the cell, zero when inside it
            de = max(ekm * TILE_SIZE_M - center_e,
                     0.0, center_e - (ekm + 1) * TILE_SIZE_M)
            dn = max(nkm * TILE_SIZE_M - center_n,
                     0.0, center_n - (nkm + 1) * TILE_SIZE_M)
            if de * de + dn * dn <= radius * radius:
                cells.append((ekm, nkm))
    return sorted(cells)


def crop_circle(tiles_dir: str | Path, year: int, center_e: float,
                center_n: float,
                radius: float = 15.0) -> tuple[PointCloud, str]:
    """Assemble the plot cloud for a circular sample from 1 km tiles.

    Points are kept when their xy distance to the centre is <= radius.
    Tile cells are visited in sorted (ekm, nkm) order and points keep file
    order within a tile, so the result is reproducible.  Returns the cloud
    and the semicolon-joined list of contributing tile names.
    """
    tiles_dir = Path(tiles_dir)
    cells = tiles_for_circle(center_e, center_n, radius)
    missing = [c for c in cells if not (tiles_dir / tile_name(year, *c)).exists()]
    if missing:
        raise MissingTile([tile_name(year, *c) for c in missing])
    parts = []
    sources = []
    r2 = radius * radius
    for cell in cells:
        name = tile_name(year, *cell)
        tile = read_las(tiles_dir / name)
        d2 = (tile.x - center_e) ** 2 + (tile.y - center_n) ** 2
        keep = np.flatnonzero(d2 <= r2)
        if keep.size:
            parts.append(tile.take(keep))
            sources.append(name)
    cloud = concat_clouds(parts)
    if len(cloud) == 0:
        raise EmptyCloud(
            f"no points within {radius} m of ({center_e:.1f}, {center_n:.1f})")
    return cloud, ";".join(sources)


def subsample(cloud: PointCloud, n: int, rng: Rng) -> PointCloud:
    """Exactly n points: a distinct draw when the cloud is large enough,
    otherwise every point plus uniform with-replacement padding."""
    count = len(cloud)
    if count == 0:
        raise EmptyCloud("cannot subsample an empty cloud")
    if count >= n:
        idx = rng.sample_indices(count, n)
    else:
        pad = np.array([rng.below(count) for _ in range(n - count)],
                       dtype=np.int64)
        idx = np.concatenate([np.arange(count, dtype=np.int64), pad])
    return cloud.take(idx)
