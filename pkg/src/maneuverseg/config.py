"""Pipeline configuration: one TOML file, full defaults, unknown keys rejected."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .errors import ConfigError
from .heuristics import HeuristicConfig
from .models import CnnConfig, RfConfig
from .segmentation import EmaConfig
from .synth import SynthConfig


@dataclass(frozen=True)
class PreprocessConfig:
    smoothing_window_s: float = 0.5


@dataclass(frozen=True)
class CorpusConfig:
    n_trips: int = 100
    # leading share of trips (sorted by id) used for training
    train_fraction: float = 1.0


@dataclass(frozen=True)
class SegmentConfig:
    # 0 selects the energy maximizer; 3 or 5 selects the fixed-window baseline
    fixed_window_s: float = 0.0


@dataclass(frozen=True)
class MetricsConfig:
    iou_min: float = 0.3
    duration_clamp_s: float = 1.0


@dataclass(frozen=True)
class AnnotateConfig:
    fps: float = 30.0


@dataclass(frozen=True)
class ModelsConfig:
    paths: tuple[str, ...] = ()


# section name -> (dataclass, keys left out of the file format)
SECTIONS = {
    "preprocess": (PreprocessConfig, ()),
    "segment": (SegmentConfig, ()),
    "ema": (EmaConfig, ()),
    "heuristics": (HeuristicConfig, ()),
    "synth": (SynthConfig, ("seed",)),
    "corpus": (CorpusConfig, ()),
    "cnn": (CnnConfig, ()),
    "rf": (RfConfig, ()),
    "metrics": (MetricsConfig, ()),
    "annotate": (AnnotateConfig, ()),
    "models": (ModelsConfig, ()),
}


def _section_fields(name):
    cls, skip = SECTIONS[name]
    return [f for f in fields(cls) if f.name not in skip]


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    sections: dict = field(default_factory=lambda: {n: c() for n, (c, _) in SECTIONS.items()})

    def __getattr__(self, name):
        try:
            return self.__dict__["sections"][name]
        except KeyError:
            raise AttributeError(name) from None

    def synth_config(self) -> SynthConfig:
        return replace(self.sections["synth"], seed=self.seed)

    def to_dict(self) -> dict:
        out: dict = {"seed": self.seed}
        for name in SECTIONS:
            obj = self.sections[name]
            out[name] = {f.name: _plain(getattr(obj, f.name)) for f in _section_fields(name)}
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        """Apply ``{"section.key": value}`` or ``{"seed": value}`` overrides."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            if dotted == "seed":
                data["seed"] = value
                continue
            section, _, key = dotted.partition(".")
            if section not in SECTIONS or not key:
                raise ConfigError(f"unknown config key {dotted!r}")
            data[section][key] = value
        return from_dict(data)


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if default and len(value) != len(default):
            raise ConfigError(f"{where}: expected {len(default)} values")
        proto = default[0] if default else ""
        return tuple(_coerce(v, proto, where) for v in value)
    return value


def from_dict(data: dict) -> PipelineConfig:
    data = dict(data)
    seed = data.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    sections = {}
    for name, (cls, _) in SECTIONS.items():
        given = data.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{name}] must be a table")
        known = {f.name: f for f in _section_fields(name)}
        bad = sorted(set(given) - set(known))
        if bad:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(bad)}")
        defaults = cls()
        kwargs = {
            k: _coerce(v, getattr(defaults, k), f"{name}.{k}") for k, v in given.items()
        }
        try:
            sections[name] = cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    return PipelineConfig(seed, sections)


def loads(text: str) -> PipelineConfig:
    try:
        return from_dict(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None


def load(path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def parse_value(text: str):
    """Read a ``--set`` value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def describe_keys() -> str:
    """One line per config key with its default, for ``--help``."""
    lines = ["config keys (TOML section.key = default):", "  seed = 0"]
    for name, (cls, _) in SECTIONS.items():
        defaults = cls()
        for f in _section_fields(name):
            value = _plain(getattr(defaults, f.name))
            lines.append(f"  {name}.{f.name} = {json.dumps(value)}")
    return "\n".join(lines)

