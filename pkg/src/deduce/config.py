"""Pipeline configuration: nested dataclasses loaded from YAML/JSON with dotted-path overrides."""

from __future__ import annotations

import dataclasses
import json
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .clustering import KmeansConfig
from .data_io import ORIENTATIONS, AugmentConfig
from .errors import ConfigError
from .losses import LossConfig
from .synthetic import SyntheticSpec
from .trainer import TrainConfig


@dataclass
class DataConfig:
    inputs: list[str] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    orientation: str = "samples-rows"
    labels: str | None = None


@dataclass
class EncoderConfig:
    """Encoder settings that do not depend on the data; ``None`` widths are resolved at run time."""

    d_model: int = 256
    n_heads: int = 8
    dropout_rate: float = 0.1
    embed_dim: int | None = None
    n_clusters: int | None = None
    mlp_hidden: int = 256


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: SyntheticSpec | None = None
    smae: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    kmeans: KmeansConfig = field(default_factory=KmeansConfig)
    k_range: list[int] = field(default_factory=lambda: [2, 6])
    out: str = "runs/latest"
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])

    def validate(self) -> None:
        has_inputs = bool(self.data.inputs)
        if has_inputs == (self.synthetic is not None):
            raise ConfigError("exactly one of data.inputs and synthetic must be set")
        if self.data.names and len(self.data.names) != len(self.data.inputs):
            raise ConfigError("data.names must match data.inputs in length")
        if self.data.orientation not in ORIENTATIONS:
            raise ConfigError(f"data.orientation must be one of {ORIENTATIONS}")
        if len(self.k_range) != 2 or self.k_range[0] < 2 or self.k_range[0] > self.k_range[1]:
            raise ConfigError(f"k_range must be [lo, hi] with 2 <= lo <= hi, got {self.k_range}")
        if self.synthetic is not None:
            self.synthetic.validate()
            if self.k_range[1] > self.synthetic.n_samples:
                raise ConfigError("k_range exceeds the number of samples")
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unknown report formats {sorted(bad)}")
        self.train.validate()
        self.kmeans.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: Any, path: str):
    """Recursively build dataclass ``cls`` from plain data, rejecting unknown keys."""
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        kwargs[key] = _coerce(hints[key], value, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _coerce(hint, value, path):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
        return _coerce(hint, value, path)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    if origin is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return [_coerce(args[0], v, path) for v in value] if args else list(value)
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is float and isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot ("1e-3") as strings
        try:
            return float(value)
        except ValueError:
            pass
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is str and isinstance(value, str):
        return value
    if hint is bool and isinstance(value, bool):
        return value
    raise ConfigError(f"{path}: expected {getattr(hint, '__name__', hint)}, got {value!r}")


def from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data or {}, "")


def load_config(path: str | os.PathLike | None) -> dict:
    """Raw mapping from a YAML or JSON file (chosen by the ``.json`` suffix)."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if Path(path).suffix.lower() == ".json" else yaml.safe_load(text)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def apply_override(data: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` to a nested mapping; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not KEY=VALUE")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {assignment!r}: {exc}") from exc
    node = data
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def parse_k_range(text: str) -> list[int]:
    try:
        lo, hi = (int(t) for t in text.split(".."))
    except ValueError:
        raise ConfigError(f"k range must look like A..B, got {text!r}") from None
    return [lo, hi]


def dumps(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


__all__ = [
    "AugmentConfig",
    "DataConfig",
    "EncoderConfig",
    "KmeansConfig",
    "LossConfig",
    "PipelineConfig",
    "SyntheticSpec",
    "TrainConfig",
    "apply_override",
    "dumps",
    "from_dict",
    "load_config",
    "parse_k_range",
]
