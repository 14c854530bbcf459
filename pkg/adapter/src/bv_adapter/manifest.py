"""Reader for the pipeline's sample manifest CSV.

Deliberately independent of the main toolkit: the CSV layout
(`id,easting,northing,year,label,patch_id,split`) is the contract.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import BadManifest, MissingInput

_REQUIRED = ("id", "easting", "northing", "year", "label", "patch_id",
             "split")


@dataclass(frozen=True)
class ManifestRow:
    sample_id: str
    easting: float
    northing: float
    year: int
    label: str
    patch_id: str
    split: str


def read_manifest(path: str | Path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path, "manifest")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _REQUIRED:
            raise BadManifest(
                f"{path}: expected columns {','.join(_REQUIRED)}, "
                f"got {','.join(reader.fieldnames or ())}")
        for row in reader:
            rows.append(ManifestRow(
                sample_id=row["id"],
                easting=float(row["easting"]),
                northing=float(row["northing"]),
                year=int(row["year"]),
                label=row["label"],
                patch_id=row["patch_id"],
                split=row["split"],
            ))
    return rows
