"""Writer for the .bvem embedding interchange format (version 1).

Independent implementation of the byte layout so the file, not a shared
library, is the interface:

    magic "BVEM" | u16 version=1 | u32 dim | u64 record_count
    per record: u16 id_len | id UTF-8 | u8 modality (0=2d, 1=3d) |
                u8 instance | u8 has_probs | [f32 p_low, f32 p_high] |
                dim x f32 embedding

Everything little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimMismatch, InvalidProbs

MAGIC = b"BVEM"
VERSION = 1
MOD_CODE = {"2d": 0, "3d": 1}


@dataclass
class Record:
    sample_id: str
    modality: str
    instance: int
    embedding: np.ndarray
    probs: tuple[float, float]


def _check_probs(rec: Record) -> None:
    p_low, p_high = rec.probs
    if not (p_low >= 0.0 and p_high >= 0.0
            and abs(p_low + p_high - 1.0) <= 1e-6):
        raise InvalidProbs(
            f"record {rec.sample_id}/{rec.modality}: ({p_low}, {p_high}) "
            "is not a 2-class softmax")


def write_store(records: list[Record], path: str | Path, dim: int) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HIQ", VERSION, dim, len(records))
    for rec in records:
        emb = np.ascontiguousarray(rec.embedding, dtype="<f4")
        if emb.ndim != 1 or emb.shape[0] != dim:
            raise DimMismatch(
                f"record {rec.sample_id}/{rec.modality} has embedding "
                f"length {emb.size}, store dim is {dim}")
        _check_probs(rec)
        ident = rec.sample_id.encode("utf-8")
        buf += struct.pack("<H", len(ident))
        buf += ident
        buf += struct.pack("<BBB", MOD_CODE[rec.modality],
                           rec.instance & 0xFF, 1)
        buf += struct.pack("<2f", float(rec.probs[0]), float(rec.probs[1]))
        buf += emb.tobytes()
    Path(path).write_bytes(bytes(buf))
