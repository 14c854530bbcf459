"""Minimal GeoTIFF reader and writer.

Covers the subset of TIFF 6.0 the pipeline actually meets: classic
(non-Big) TIFF in either byte order, one or three samples per pixel,
chunky planar layout, strip or tile organisation, compression none or
DEFLATE, sample types U8, U16 and F32.  Georeferencing comes from the
ModelPixelScale (33550) and ModelTiepoint (33922) tags; nodata from the
GDAL ASCII convention (42113).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptIFD,
    MissingGeoTags,
    UnsupportedCompression,
)
from .core import Grid

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 12: 8}
_TYPE_FMT = {1: "B", 3: "H", 4: "I", 12: "d"}

TAG_WIDTH = 256
TAG_HEIGHT = 257
TAG_BITS = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SPP = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_COUNTS = 279
TAG_PLANAR = 284
TAG_PREDICTOR = 317
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_PIXEL_SCALE = 33550
TAG_TIEPOINT = 33922
TAG_GDAL_NODATA = 42113


@dataclass
class Raster:
    """Decoded raster: (H, W) or (H, W, C) array plus georeference."""

    data: np.ndarray
    grid: Grid
    nodata: float | int | None = None


def _dtype_for(bits: int, fmt: int, bo: str) -> np.dtype:
    if fmt == 1 and bits == 8:
        return np.dtype("u1")
    if fmt == 1 and bits == 16:
        return np.dtype(f"{bo}u2")
    if fmt == 3 and bits == 32:
        return np.dtype(f"{bo}f4")
    raise CorruptIFD(f"unsupported sample type: {bits}-bit format {fmt}")


def _read_entries(data: bytes, bo: str, ifd_off: int,
                  source: str) -> dict[int, tuple[int, int, bytes]]:
    if ifd_off + 2 > len(data):
        raise CorruptIFD(f"{source}: IFD offset {ifd_off} out of range")
    n = struct.unpack_from(bo + "H", data, ifd_off)[0]
    end = ifd_off + 2 + n * 12 + 4
    if end > len(data):
        raise CorruptIFD(f"{source}: IFD with {n} entries overruns the file")
    entries: dict[int, tuple[int, int, bytes]] = {}
    for i in range(n):
        off = ifd_off + 2 + i * 12
        tag, typ, count = struct.unpack_from(bo + "HHI", data, off)
        if typ not in _TYPE_SIZES:
            continue  # unknown field types are skippable per TIFF 6.0
        size = _TYPE_SIZES[typ] * count
        if size <= 4:
            raw = data[off + 8:off + 8 + size]
        else:
            voff = struct.unpack_from(bo + "I", data, off + 8)[0]
            if voff + size > len(data):
                raise CorruptIFD(f"{source}: tag {tag} value outside the file")
            raw = data[voff:voff + size]
        entries[tag] = (typ, count, raw)
    return entries


def _values(entries: dict, tag: int, bo: str) -> list | None:
    if tag not in entries:
        return None
    typ, count, raw = entries[tag]
    if typ == 2:
        return [raw.split(b"\0", 1)[0].decode("ascii", "replace")]
    if typ == 5:  # rational
        out = []
        for i in range(count):
            num, den = struct.unpack_from(bo + "II", raw, i * 8)
            out.append(num / den if den else 0.0)
        return out
    fmt = _TYPE_FMT[typ]
    return list(struct.unpack_from(bo + str(count) + fmt, raw, 0))


def _scalar(entries: dict, tag: int, bo: str, default=None):
    vals = _values(entries, tag, bo)
    if vals is None:
        return default
    return vals[0]


def parse_gtiff(data: bytes, source: str = "<bytes>") -> Raster:
    if len(data) < 8:
        raise CorruptIFD(f"{source}: too short for a TIFF header")
    order = data[0:2]
    if order == b"II":
        bo = "<"
    elif order == b"MM":
        bo = ">"
    else:
        raise CorruptIFD(f"{source}: byte order mark {order!r}")
    magic = struct.unpack_from(bo + "H", data, 2)[0]
    if magic == 43:
        raise CorruptIFD(f"{source}: BigTIFF not supported")
    if magic != 42:
        raise CorruptIFD(f"{source}: bad magic {magic}")
    ifd_off = struct.unpack_from(bo + "I", data, 4)[0]
    entries = _read_entries(data, bo, ifd_off, source)

    width = _scalar(entries, TAG_WIDTH, bo)
    height = _scalar(entries, TAG_HEIGHT, bo)
    if not width or not height:
        raise CorruptIFD(f"{source}: missing image dimensions")
    spp = int(_scalar(entries, TAG_SPP, bo, 1))
    bits_list = _values(entries, TAG_BITS, bo) or [8]
    if len(set(bits_list)) != 1:
        raise CorruptIFD(f"{source}: mixed bits per sample {bits_list}")
    bits = int(bits_list[0])
    fmt_list = _values(entries, TAG_SAMPLE_FORMAT, bo) or [1]
    fmt = int(fmt_list[0])
    comp = int(_scalar(entries, TAG_COMPRESSION, bo, 1))
    if comp not in (1, 8):
        raise UnsupportedCompression(f"{source}: compression {comp}")
    predictor = int(_scalar(entries, TAG_PREDICTOR, bo, 1))
    if predictor != 1:
        raise UnsupportedCompression(f"{source}: predictor {predictor}")
    planar = int(_scalar(entries, TAG_PLANAR, bo, 1))
    if planar != 1:
        raise UnsupportedCompression(f"{source}: planar configuration {planar}")
    dt = _dtype_for(bits, fmt, bo)

    def chunk(off: int, size: int) -> bytes:
        if off + size > len(data):
            raise CorruptIFD(f"{source}: data segment outside the file")
        seg = data[off:off + size]
        return zlib.decompress(seg) if comp == 8 else seg

    if TAG_TILE_OFFSETS in entries:
        tw = int(_scalar(entries, TAG_TILE_WIDTH, bo, 0))
        th = int(_scalar(entries, TAG_TILE_LENGTH, bo, 0))
        offs = _values(entries, TAG_TILE_OFFSETS, bo)
        cnts = _values(entries, TAG_TILE_COUNTS, bo)
        if not tw or not th or cnts is None or len(offs) != len(cnts):
            raise CorruptIFD(f"{source}: inconsistent tile tags")
        across = (width + tw - 1) // tw
        down = (height + th - 1) // th
        if len(offs) != across * down:
            raise CorruptIFD(f"{source}: expected {across * down} tiles, "
                             f"found {len(offs)}")
        img = np.zeros((height, width, spp), dtype=dt)
        for ti in range(down):
            for tj in range(across):
                k = ti * across + tj
                buf = chunk(int(offs[k]), int(cnts[k]))
                want = tw * th * spp * dt.itemsize
                if len(buf) < want:
                    raise CorruptIFD(f"{source}: tile {k} truncated")
                tile = np.frombuffer(buf, dtype=dt,
                                     count=tw * th * spp).reshape(th, tw, spp)
                r0, c0 = ti * th, tj * tw
                h = min(th, height - r0)
                w = min(tw, width - c0)
                img[r0:r0 + h, c0:c0 + w] = tile[:h, :w]
    else:
        offs = _values(entries, TAG_STRIP_OFFSETS, bo)
        cnts = _values(entries, TAG_STRIP_COUNTS, bo)
        if offs is None or cnts is None or len(offs) != len(cnts):
            raise CorruptIFD(f"{source}: inconsistent strip tags")
        rps = int(_scalar(entries, TAG_ROWS_PER_STRIP, bo, height))
        img = np.zeros((height, width, spp), dtype=dt)
        row = 0
        for off, cnt in zip(offs, cnts):
            rows = min(rps, height - row)
            if rows <= 0:
                raise CorruptIFD(f"{source}: more strips than rows")
            buf = chunk(int(off), int(cnt))
            want = rows * width * spp * dt.itemsize
            if len(buf) < want:
                raise CorruptIFD(f"{source}: strip at row {row} truncated")
            img[row:row + rows] = np.frombuffer(
                buf, dtype=dt, count=rows * width * spp).reshape(rows, width, spp)
            row += rows
        if row < height:
            raise CorruptIFD(f"{source}: strips cover {row} of {height} rows")

    scale = _values(entries, TAG_PIXEL_SCALE, bo)
    tie = _values(entries, TAG_TIEPOINT, bo)
    if scale is None or tie is None or len(scale) < 2 or len(tie) < 6:
        raise MissingGeoTags(f"{source}: need ModelPixelScale and ModelTiepoint")
    sx, sy = float(scale[0]), float(scale[1])
    ti_i, ti_j, _, ti_x, ti_y, _ = (float(v) for v in tie[:6])
    grid = Grid(origin_e=ti_x - ti_i * sx, origin_n=ti_y + ti_j * sy,
                pixel_size=sx, width=int(width), height=int(height))
    if abs(sx - sy) > 1e-9 * max(abs(sx), abs(sy)):
        raise CorruptIFD(f"{source}: non-square pixels {sx} x {sy}")

    nodata = None
    nd = _values(entries, TAG_GDAL_NODATA, bo)
    if nd:
        try:
            f = float(nd[0].strip())
            nodata = int(f) if img.dtype.kind in "ui" and f == int(f) else f
        except ValueError:
            pass

    arr = img[:, :, 0] if spp == 1 else img
    # normalise to native byte order so downstream math is uniform
    arr = np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("=")))
    return Raster(data=arr, grid=grid, nodata=nodata)


def read_gtiff(path: str | Path) -> Raster:
    p = Path(path)
    return parse_gtiff(p.read_bytes(), source=str(p))


def _encode(arr: np.ndarray, comp: str) -> bytes:
    raw = arr.tobytes()
    return zlib.compress(raw, 6) if comp == "deflate" else raw


def write_gtiff(raster: Raster, path: str | Path,
                compression: str = "none",
                rows_per_strip: int | None = None,
                tile_size: int | None = None,
                byte_order: str = "<") -> None:
    """Serialise a Raster; strip layout unless tile_size is given.

    tile_size must be a multiple of 16 per the TIFF tiling rules.
    compression is "none" or "deflate".
    """
    if compression not in ("none", "deflate"):
        raise UnsupportedCompression(f"cannot write compression {compression!r}")
    if byte_order not in ("<", ">"):
        raise ValueError("byte_order must be '<' or '>'")
    data = raster.data
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3 or data.shape[2] not in (1, 3):
        raise ValueError("raster data must be (H, W) or (H, W, 1|3)")
    height, width, spp = data.shape
    kind = data.dtype
    if kind == np.uint8:
        bits, sfmt = 8, 1
    elif kind == np.uint16:
        bits, sfmt = 16, 1
    elif kind == np.float32:
        bits, sfmt = 32, 3
    else:
        raise ValueError(f"unsupported array dtype {data.dtype}")
    data = np.ascontiguousarray(data.astype(np.dtype(f"{byte_order}{kind.str[1:]}")))
    bo = byte_order

    segments: list[bytes] = []
    if tile_size is not None:
        if tile_size % 16:
            raise ValueError("tile_size must be a multiple of 16")
        tw = th = tile_size
        across = (width + tw - 1) // tw
        down = (height + th - 1) // th
        for ti in range(down):
            for tj in range(across):
                block = np.zeros((th, tw, spp), dtype=data.dtype)
                r0, c0 = ti * th, tj * tw
                h = min(th, height - r0)
                w = min(tw, width - c0)
                block[:h, :w] = data[r0:r0 + h, c0:c0 + w]
                segments.append(_encode(block, compression))
    else:
        rps = height if rows_per_strip is None else max(1, rows_per_strip)
        for row in range(0, height, rps):
            segments.append(_encode(data[row:row + rps], compression))

    buf = bytearray()
    buf += b"II" if bo == "<" else b"MM"
    buf += struct.pack(bo + "H", 42)
    ifd_ptr_pos = len(buf)
    buf += struct.pack(bo + "I", 0)  # patched once the IFD lands

    seg_offsets = []
    for seg in segments:
        seg_offsets.append(len(buf))
        buf += seg
        if len(buf) % 2:
            buf += b"\0"  # keep word alignment for following values

    extra = bytearray()  # out-of-line tag values, appended after the IFD

    entries: list[tuple[int, int, int, bytes]] = []

    def add(tag: int, typ: int, vals: list) -> None:
        if typ == 2:
            raw = vals[0].encode("ascii") + b"\0"
            count = len(raw)
        else:
            count = len(vals)
            raw = struct.pack(bo + str(count) + _TYPE_FMT[typ], *vals)
        entries.append((tag, typ, count, raw))

    g = raster.grid
    add(TAG_WIDTH, 4, [width])
    add(TAG_HEIGHT, 4, [height])
    add(TAG_BITS, 3, [bits] * spp)
    add(TAG_COMPRESSION, 3, [1 if compression == "none" else 8])
    add(TAG_PHOTOMETRIC, 3, [2 if spp == 3 else 1])
    if tile_size is None:
        add(TAG_STRIP_OFFSETS, 4, seg_offsets)
        add(TAG_SPP, 3, [spp])
        add(TAG_ROWS_PER_STRIP, 4,
            [height if rows_per_strip is None else rows_per_strip])
        add(TAG_STRIP_COUNTS, 4, [len(s) for s in segments])
    else:
        add(TAG_SPP, 3, [spp])
    add(TAG_PLANAR, 3, [1])
    if tile_size is not None:
        add(TAG_TILE_WIDTH, 3, [tile_size])
        add(TAG_TILE_LENGTH, 3, [tile_size])
        add(TAG_TILE_OFFSETS, 4, seg_offsets)
        add(TAG_TILE_COUNTS, 4, [len(s) for s in segments])
    add(TAG_SAMPLE_FORMAT, 3, [sfmt] * spp)
    add(TAG_PIXEL_SCALE, 12, [g.pixel_size, g.pixel_size, 0.0])
    add(TAG_TIEPOINT, 12, [0.0, 0.0, 0.0, g.origin_e, g.origin_n, 0.0])
    if raster.nodata is not None:
        add(TAG_GDAL_NODATA, 2, [repr(raster.nodata)])

    entries.sort(key=lambda e: e[0])
    ifd_off = len(buf)
    struct.pack_into(bo + "I", buf, ifd_ptr_pos, ifd_off)
    buf += struct.pack(bo + "H", len(entries))
    value_base = ifd_off + 2 + len(entries) * 12 + 4
    for tag, typ, count, raw in entries:
        buf += struct.pack(bo + "HHI", tag, typ, count)
        if len(raw) <= 4:
            buf += raw + b"\0" * (4 - len(raw))
        else:
            pos = value_base + len(extra)
            if pos % 2:
                extra += b"\0"
                pos += 1
            buf += struct.pack(bo + "I", pos)
            extra += raw
    buf += struct.pack(bo + "I", 0)  # no further IFDs
    buf += extra
    Path(path).write_bytes(bytes(buf))
