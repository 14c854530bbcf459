"""Pipeline configuration: one TOML file shared by every subcommand.

Sections map onto the dataclasses they configure ([dataset], [train],
[augment2d], [augment3d], [synth]) plus a [paths] table.  Unknown keys
are rejected so typos fail loudly instead of silently using defaults.
Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .augment import Augment2DConfig, Augment3DConfig
from .dataset import DatasetConfig
from .errors import ConfigError
from .fusion import TrainConfig
from .synth import SynthSpec


@dataclasses.dataclass
class Paths:
    hnv: str = ""
    tiles: str = ""
    orthos: str = ""
    embeddings: str = ""
    manifest: str = ""
    out: str = "out"


@dataclasses.dataclass
class PipelineConfig:
    paths: Paths
    dataset: DatasetConfig
    train: TrainConfig
    augment2d: Augment2DConfig
    augment3d: Augment3DConfig
    synth: SynthSpec


_SECTIONS = {
    "paths": Paths,
    "dataset": DatasetConfig,
    "train": TrainConfig,
    "augment2d": Augment2DConfig,
    "augment3d": Augment3DConfig,
    "synth": SynthSpec,
}


def _coerce(name: str, value: Any, target_type: Any, section: str) -> Any:
    # TOML arrays arrive as lists; tuple-typed fields take tuples
    if isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if isinstance(value, bool):
        return value
    # annotations are strings under `from __future__ import annotations`
    if isinstance(value, int) and target_type in (float, "float"):
        return float(value)
    return value


def _build(cls, table: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in fields:
            known = ", ".join(sorted(fields))
            raise ConfigError(
                f"[{section}] has no key {key!r} (known keys: {known})")
        kwargs[key] = _coerce(key, value, fields[key].type, section)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] value: {exc}") from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse the TOML file; a missing path yields an all-defaults config."""
    raw: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    for section in raw:
        if section not in _SECTIONS:
            known = ", ".join(sorted(_SECTIONS))
            raise ConfigError(
                f"unknown config section [{section}] (known: {known})")
    parts = {name: _build(cls, raw.get(name, {}), name)
             for name, cls in _SECTIONS.items()}
    # the dataset seed drives other sections unless they pin their own
    ds_seed = raw.get("dataset", {}).get("seed")
    if ds_seed is not None:
        if "seed" not in raw.get("synth", {}):
            parts["synth"].seed = ds_seed
        if "seed" not in raw.get("train", {}):
            parts["train"].seed = ds_seed
    return PipelineConfig(**parts)


def override(obj, **updates) -> None:
    """Apply non-None attribute overrides in place (flags beat the file)."""
    for key, value in updates.items():
        if value is not None:
            setattr(obj, key, value)
