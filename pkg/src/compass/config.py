"""Run configuration: sectioned INI files, dotted overrides and presets.

A run file has the sections ``dataset``, ``model``, ``training``, ``masking``,
``losses`` and ``paths``. Every key maps onto a field of the matching config
dataclass; unknown keys are rejected. Keys shared between sections
(modality count, class count, raw widths, seeds) may be given once under
``dataset`` and are inherited; explicit counts and widths must agree while
seeds may differ.
"""

from __future__ import annotations

import collections.abc
import configparser
import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable

from .losses import LossWeights
from .masking import MaskConfig
from .model import ModelConfig
from .synthdata import DatasetSpec
from .trainer import TrainConfig

OUTPUT_ROOT_ENV = "COMPASS_OUTPUT_ROOT"
PRESET_PREFIX = "preset:"
PRESETS = ("desk", "paper-scale", "weak", "easy")


class ConfigError(ValueError):
    """Invalid, inconsistent or unreadable configuration."""


@dataclass(frozen=True)
class PathsConfig:
    root: str = "compass-runs"  # relative roots sit under $COMPASS_OUTPUT_ROOT when set
    data: str = "data"
    checkpoints: str = "checkpoints"
    ablation_checkpoints: str = "checkpoints-no-aux"
    reports: str = "reports"
    log: str = "train_log.csv"

    def resolved_root(self) -> str:
        return os.path.join(os.environ.get(OUTPUT_ROOT_ENV, ""), self.root or "compass-runs")

    def path(self, key: str) -> str:
        value = getattr(self, key)
        return value if os.path.isabs(value) else os.path.join(self.resolved_root(), value)


# training fields owned by the paths section instead
_TRAIN_EXCLUDED = {"checkpoint_dir", "log_path"}
_SECTIONS = {
    "dataset": DatasetSpec,
    "model": ModelConfig,
    "training": TrainConfig,
    "masking": MaskConfig,
    "losses": LossWeights,
    "paths": PathsConfig,
}
# key -> sections that also carry it, inherited from the first when absent
_SHARED = {
    "n_modalities": ("dataset", "model", "masking"),
    "n_classes": ("dataset", "model"),
    "raw_dims": ("dataset", "model"),
    "seed": ("dataset", "model", "training"),
}


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    masking: MaskConfig = field(default_factory=MaskConfig)
    losses: LossWeights = field(default_factory=LossWeights)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        n = self.dataset.n_modalities
        if self.model.n_modalities != n or self.masking.n_modalities != n:
            raise ConfigError(
                f"modality count disagrees: dataset {n}, model {self.model.n_modalities}, "
                f"masking {self.masking.n_modalities}"
            )
        if self.model.n_classes != self.dataset.n_classes:
            raise ConfigError("model.n_classes must equal dataset.n_classes")
        if self.model.raw_dims != self.dataset.raw_dims:
            raise ConfigError("model.raw_dims must equal dataset.raw_dims")

    def train_config(self, checkpoint_dir: str | None = None, log_path: str | None = None) -> TrainConfig:
        return dataclasses.replace(
            self.training,
            checkpoint_dir=checkpoint_dir or self.paths.path("checkpoints"),
            log_path=log_path or self.paths.path("log"),
        )

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for section, cls in _SECTIONS.items():
            obj = getattr(self, section)
            parser[section] = {f.name: _format(getattr(obj, f.name)) for f in _fields(section)}
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in parser[section].items()]
            lines.append("")
        return "\n".join(lines)

    def write(self, path: str) -> str:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(self.to_ini())
        return path


def _fields(section: str) -> list[dataclasses.Field]:
    out = [f for f in dataclasses.fields(_SECTIONS[section]) if f.init]
    if section == "training":
        out = [f for f in out if f.name not in _TRAIN_EXCLUDED]
    return out


# -- value coercion -------------------------------------------------------------
def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, typing.Mapping):
        return ", ".join(f"{k}:{v!r}" for k, v in sorted(value.items()))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(kind, text: str):
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: '{text}'")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _parse(annotation, text: str):
    text = text.strip()
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in args if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        return _parse(inner[0], text)
    if origin is tuple:
        return tuple(_parse_scalar(args[0], p.strip()) for p in text.split(",") if p.strip())
    if origin in (collections.abc.Mapping, dict):
        out = {}
        for item in filter(None, (p.strip() for p in text.split(","))):
            key, _, scale = item.partition(":")
            out[key.strip().strip("'\"")] = float(scale)
        return out
    return _parse_scalar(annotation, text)


def _hints(section: str) -> dict[str, Any]:
    return typing.get_type_hints(_SECTIONS[section])


# -- loading ------------------------------------------------------------------------
def _read_text(source: str) -> str:
    if source.startswith(PRESET_PREFIX):
        name = source[len(PRESET_PREFIX):]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}'; choose from {', '.join(PRESETS)}")
        return resources.files("compass.presets").joinpath(f"{name}.ini").read_text()
    if not os.path.isfile(source):
        raise ConfigError(f"config file not found: {source}")
    with open(source) as fh:
        return fh.read()


def parse_override(text: str) -> tuple[str, str, str]:
    key, sep, value = text.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot or not name:
        raise ConfigError(f"override must look like section.key=value, got '{text}'")
    return section, name.strip(), value.strip()


def load(source: str | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Resolve defaults, then the file (or preset), then ``section.key=value`` overrides."""
    raw: dict[str, dict[str, str]] = {s: {} for s in _SECTIONS}
    if source is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(_read_text(source), source=source)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {source}: {exc}") from exc
        for section in parser.sections():
            if section not in raw:
                raise ConfigError(f"unknown section [{section}]")
            raw[section].update(parser[section])
    for item in overrides:
        section, name, value = parse_override(item)
        if section not in raw:
            raise ConfigError(f"unknown section '{section}' in override '{item}'")
        raw[section][name] = value
    return from_sections(raw)


def from_sections(raw: dict[str, dict[str, str]]) -> RunConfig:
    for key, sections in _SHARED.items():
        given = [s for s in sections if key in raw.get(s, {})]
        if given:
            for s in sections:
                raw.setdefault(s, {}).setdefault(key, raw[given[0]][key])
    built = {}
    for section, cls in _SECTIONS.items():
        hints = _hints(section)
        allowed = {f.name for f in _fields(section)}
        kwargs = {}
        for key, text in raw.get(section, {}).items():
            if key not in allowed:
                raise ConfigError(f"unknown key '{section}.{key}'")
            try:
                kwargs[key] = _parse(hints[key], text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
        try:
            built[section] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
    return RunConfig(**built)
