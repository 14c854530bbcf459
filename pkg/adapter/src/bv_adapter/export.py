"""Run backbones over extracted plot samples and write a .bvem store.

Inputs are the extraction layout of the main pipeline: one PNG per
sample under the images directory, one .xyz point list per sample under
the clouds directory.  When a directory is omitted the corresponding
backbone runs without raw input (enough for constant stubs); when it is
given, missing or unreadable files become per-sample failures instead
of aborting the whole export.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backbones import EMBED_DIM, load_backbone
from .bvem import Record, write_store
from .errors import AdapterError, DimMismatch, MissingInput
from .manifest import ManifestRow, read_manifest


@dataclass
class AdapterConfig:
    manifest: str | Path
    out: str | Path
    images_dir: str | Path | None = None
    clouds_dir: str | Path | None = None
    backbone_2d: str = "stub"
    backbone_3d: str = "stub"
    instance: int = 0
    batch_size: int = 32
    splits: tuple[str, ...] = ()  # empty = all


def _load_image(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img)


def _load_cloud(path: Path) -> np.ndarray:
    pts = np.loadtxt(path, ndmin=2, dtype=np.float64)
    if pts.size and pts.shape[1] < 3:
        raise AdapterError(f"{path}: expected x y z columns")
    return pts


_MODALITIES = (
    ("2d", "images_dir", "png", _load_image, "backbone_2d"),
    ("3d", "clouds_dir", "xyz", _load_cloud, "backbone_3d"),
)


def export_embeddings(cfg: AdapterConfig) -> dict:
    """Write one record per (sample, modality); returns a summary.

    The summary maps "records" to the count written and "failures" to
    (sample_id, modality, reason) triples for samples whose inputs could
    not be read.  Backbones emitting a width other than 512 abort.
    """
    samples = read_manifest(cfg.manifest)
    if cfg.splits:
        samples = [s for s in samples if s.split in cfg.splits]

    backbones = {name: load_backbone(getattr(cfg, attr))
                 for name, _, _, _, attr in _MODALITIES}
    for name, backbone in backbones.items():
        if backbone.dim != EMBED_DIM:
            raise DimMismatch(
                f"{name} backbone emits {backbone.dim}-d embeddings, "
                f"stores take {EMBED_DIM}")

    records: list[Record] = []
    failures: list[tuple[str, str, str]] = []
    for name, dir_attr, ext, loader, _ in _MODALITIES:
        backbone = backbones[name]
        in_dir = getattr(cfg, dir_attr)
        batch_rows: list[ManifestRow] = []
        batch_inputs: list = []

        def flush():
            if not batch_rows:
                return
            emb, probs = backbone.embed(batch_inputs)
            if emb.shape != (len(batch_rows), EMBED_DIM):
                raise DimMismatch(
                    f"{name} backbone returned shape {emb.shape}")
            for row, e, p in zip(batch_rows, emb, probs):
                records.append(Record(
                    sample_id=row.sample_id, modality=name,
                    instance=cfg.instance,
                    embedding=np.asarray(e, dtype=np.float32),
                    probs=(float(p[0]), float(p[1]))))
            batch_rows.clear()
            batch_inputs.clear()

        for row in samples:
            data = None
            if in_dir is not None:
                path = Path(in_dir) / f"{row.sample_id}.{ext}"
                try:
                    if not path.exists():
                        raise MissingInput(path, f"{name} input")
                    data = loader(path)
                except (AdapterError, OSError, ValueError) as exc:
                    failures.append((row.sample_id, name, str(exc)))
                    continue
            batch_rows.append(row)
            batch_inputs.append(data)
            if len(batch_rows) >= cfg.batch_size:
                flush()
        flush()

    records.sort(key=lambda r: (r.sample_id, r.modality))
    write_store(records, cfg.out, dim=EMBED_DIM)
    return {"records": len(records), "samples": len(samples),
            "failures": failures}
