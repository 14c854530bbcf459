"""Binary interchange store for per-sample backbone outputs.

One record per (sample, modality, model instance): a 512-dimensional f32
embedding plus optional 2-class probabilities.  The on-disk layout is
little-endian:

    header:  magic "BVEM" | version u16 (=1) | dim u32 | record_count u64
    record:  id_len u16 | id UTF-8 | modality u8 (0=2D, 1=3D) |
             instance u8 | has_probs u8 |
             [p_low f32, p_high f32, when has_probs] | dim x f32

Nothing here computes embeddings; producers live elsewhere and only need
to emit this layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    DuplicateKey,
    MissingModality,
    NoProbs,
    TruncatedFile,
    VersionUnsupported,
)

MAGIC = b"BVEM"
VERSION = 1
EMBED_DIM = 512

MOD_2D = "2d"
MOD_3D = "3d"
_MOD_CODE = {MOD_2D: 0, MOD_3D: 1}
_MOD_NAME = {0: MOD_2D, 1: MOD_3D}

Key = tuple[str, str, int]


@dataclass
class EmbeddingRecord:
    sample_id: str
    modality: str  # MOD_2D or MOD_3D
    instance: int
    embedding: np.ndarray  # f32, length = store dim
    probs: tuple[float, float] | None = None  # (p_low, p_high)

    def key(self) -> Key:
        return (self.sample_id, self.modality, self.instance)


@dataclass
class EmbeddingStore:
    dim: int
    records: dict[Key, EmbeddingRecord]

    def get(self, sample_id: str, modality: str,
            instance: int) -> EmbeddingRecord | None:
        return self.records.get((sample_id, modality, instance))

    def __len__(self) -> int:
        return len(self.records)


def write_store(records: list[EmbeddingRecord], path: str | Path,
                dim: int = EMBED_DIM) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HIQ", VERSION, dim, len(records))
    for rec in records:
        emb = np.asarray(rec.embedding, dtype="<f4")
        if emb.ndim != 1 or emb.shape[0] != dim:
            raise DimMismatch(
                f"record {rec.key()} has embedding length {emb.size}, "
                f"store dim is {dim}")
        if rec.modality not in _MOD_CODE:
            raise ValueError(f"unknown modality {rec.modality!r}")
        ident = rec.sample_id.encode("utf-8")
        buf += struct.pack("<H", len(ident))
        buf += ident
        buf += struct.pack("<BBB", _MOD_CODE[rec.modality],
                           rec.instance & 0xFF, 1 if rec.probs else 0)
        if rec.probs:
            buf += struct.pack("<2f", float(rec.probs[0]), float(rec.probs[1]))
        buf += emb.tobytes()
    Path(path).write_bytes(bytes(buf))


def parse_store(data: bytes, source: str = "<bytes>") -> EmbeddingStore:
    if len(data) < 18:
        raise TruncatedFile(f"{source}: shorter than a store header")
    if data[0:4] != MAGIC:
        raise BadMagic(f"{source}: magic {data[0:4]!r} is not {MAGIC!r}")
    version, dim, count = struct.unpack_from("<HIQ", data, 4)
    if version != VERSION:
        raise VersionUnsupported(f"{source}: store version {version}")
    pos = 18
    records: dict[Key, EmbeddingRecord] = {}
    for i in range(count):
        if pos + 2 > len(data):
            raise TruncatedFile(f"{source}: record {i} header cut off")
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + id_len + 3 > len(data):
            raise TruncatedFile(f"{source}: record {i} id/flags cut off")
        sample_id = data[pos:pos + id_len].decode("utf-8")
        pos += id_len
        mod_code, instance, has_probs = struct.unpack_from("<BBB", data, pos)
        pos += 3
        if mod_code not in _MOD_NAME:
            raise BadMagic(f"{source}: record {i} modality code {mod_code}")
        probs = None
        if has_probs:
            if pos + 8 > len(data):
                raise TruncatedFile(f"{source}: record {i} probs cut off")
            p_low, p_high = struct.unpack_from("<2f", data, pos)
            probs = (float(p_low), float(p_high))
            pos += 8
        if pos + 4 * dim > len(data):
            raise TruncatedFile(f"{source}: record {i} embedding cut off")
        emb = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).copy()
        pos += 4 * dim
        rec = EmbeddingRecord(sample_id=sample_id,
                              modality=_MOD_NAME[mod_code],
                              instance=instance, embedding=emb, probs=probs)
        if rec.key() in records:
            raise DuplicateKey(f"{source}: duplicate record key {rec.key()}")
        records[rec.key()] = rec
    return EmbeddingStore(dim=dim, records=records)


def read_store(path: str | Path) -> EmbeddingStore:
    p = Path(path)
    return parse_store(p.read_bytes(), source=str(p))


def join_modalities(store: EmbeddingStore, samples, instance: int
                    ) -> list[tuple[str, np.ndarray, str, str]]:
    """Concatenate per-sample embeddings, 2D first then 3D.

    `samples` is any iterable with sample_id/label/split attributes (a
    manifest).  Output rows follow the input order.  All absences are
    collected before raising so the error names every missing pair.
    """
    missing = []
    out = []
    for s in samples:
        r2 = store.get(s.sample_id, MOD_2D, instance)
        r3 = store.get(s.sample_id, MOD_3D, instance)
        if r2 is None:
            missing.append((s.sample_id, MOD_2D))
        if r3 is None:
            missing.append((s.sample_id, MOD_3D))
        if r2 is not None and r3 is not None:
            out.append((s.sample_id,
                        np.concatenate([r2.embedding, r3.embedding]),
                        s.label, s.split))
    if missing:
        raise MissingModality(missing)
    return out


def average_instances(store: EmbeddingStore, sample_id: str,
                      modality: str) -> tuple[float, float]:
    """Mean of per-instance probabilities, renormalised to sum to one."""
    pairs = [rec.probs for key, rec in store.records.items()
             if key[0] == sample_id and key[1] == modality
             and rec.probs is not None]
    if not pairs:
        raise NoProbs(f"no probabilities stored for {sample_id}/{modality}")
    p_low = sum(p[0] for p in pairs) / len(pairs)
    p_high = sum(p[1] for p in pairs) / len(pairs)
    total = p_low + p_high
    return (p_low / total, p_high / total)


def export_tsv(store: EmbeddingStore, path: str | Path) -> None:
    """Debug dump, one record per line, keys sorted."""
    with open(path, "w") as fh:
        head = ["sample_id", "modality", "instance", "p_low", "p_high"]
        head += [f"e{i}" for i in range(store.dim)]
        fh.write("\t".join(head) + "\n")
        for key in sorted(store.records):
            rec = store.records[key]
            cells = [rec.sample_id, rec.modality, str(rec.instance)]
            if rec.probs:
                cells += [f"{rec.probs[0]:.9g}", f"{rec.probs[1]:.9g}"]
            else:
                cells += ["", ""]
            cells += [f"{v:.9g}" for v in rec.embedding]
            fh.write("\t".join(cells) + "\n")
