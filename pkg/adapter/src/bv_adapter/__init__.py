"""Backbone-to-store adapter: manifest + extracted samples in, .bvem out."""

from .backbones import EMBED_DIM, StubBackbone, load_backbone
from .bvem import Record, write_store
from .errors import (
    AdapterError,
    BadCheckpoint,
    BadManifest,
    DimMismatch,
    ExportFailures,
    InvalidProbs,
    MissingInput,
)
from .export import AdapterConfig, export_embeddings
from .manifest import ManifestRow, read_manifest

__all__ = [
    "EMBED_DIM",
    "StubBackbone",
    "load_backbone",
    "Record",
    "write_store",
    "AdapterError",
    "BadCheckpoint",
    "BadManifest",
    "DimMismatch",
    "ExportFailures",
    "InvalidProbs",
    "MissingInput",
    "AdapterConfig",
    "export_embeddings",
    "ManifestRow",
    "read_manifest",
]
