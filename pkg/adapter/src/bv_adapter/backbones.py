"""Backbone loading: turn a checkpoint reference into a feature extractor.

A backbone maps a batch of raw inputs (image arrays for 2d, point
arrays for 3d) to (embeddings, probabilities).  Real deep-learning
checkpoints live outside this toolkit; what ships here is the loader
contract plus a stub backbone for smoke tests and format plumbing.

A checkpoint reference is either the literal name "stub" or the path of
a small JSON file:

    {"kind": "stub", "dim": 512, "value": 0.0625, "p_high": 0.5}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import BadCheckpoint, MissingInput

EMBED_DIM = 512


class StubBackbone:
    """Emits one fixed vector and fixed probabilities for every input."""

    def __init__(self, dim: int = EMBED_DIM, value: float = 0.0625,
                 p_high: float = 0.5):
        self.dim = int(dim)
        self.vector = np.full(self.dim, value, dtype=np.float32)
        self.probs = (1.0 - p_high, p_high)

    def embed(self, inputs: list) -> tuple[np.ndarray, np.ndarray]:
        n = len(inputs)
        emb = np.tile(self.vector, (n, 1))
        probs = np.tile(np.asarray(self.probs, dtype=np.float32), (n, 1))
        return emb, probs


def load_backbone(ref: str | Path):
    """Resolve a checkpoint reference to a backbone instance."""
    if str(ref) == "stub":
        return StubBackbone()
    path = Path(ref)
    if not path.exists():
        raise MissingInput(path, "checkpoint")
    try:
        spec = json.loads(path.read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise BadCheckpoint(f"{path}: not a JSON checkpoint ({exc})") from exc
    kind = spec.get("kind")
    if kind == "stub":
        known = {"kind", "dim", "value", "p_high"}
        extra = set(spec) - known
        if extra:
            raise BadCheckpoint(f"{path}: unknown fields {sorted(extra)}")
        return StubBackbone(dim=spec.get("dim", EMBED_DIM),
                            value=spec.get("value", 0.0625),
                            p_high=spec.get("p_high", 0.5))
    raise BadCheckpoint(f"{path}: unknown backbone kind {kind!r}")
