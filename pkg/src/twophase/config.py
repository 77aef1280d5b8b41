"""Run configuration files: INI-style ``key = value`` sections, or JSON by extension."""
from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import ConfigurationError
from .datagen import DatasetConfig
from .solver import MaterialModel, SolverConfig
from .surrogates import SurrogateConfig
from .training import TrainConfig

TYPED_SECTIONS = {
    "dataset": DatasetConfig,
    "solver": SolverConfig,
    "material": MaterialModel,
    "model": SurrogateConfig,
    "train": TrainConfig,
}
FREE_SECTIONS = ("paths", "evaluate", "bench", "sensitivity", "ablate")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, value, default):
    where = f"[{section}] {key}"
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in _TRUE | _FALSE:
                return s in _TRUE
            raise ValueError(f"expected a boolean, got {value!r}")
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"expected an integer, got {value!r}")
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = value if isinstance(value, (list, tuple)) else _split_list(value)
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in items)
        return str(value)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"{where}: {err}") from None


def _split_list(value: str) -> list:
    s = str(value).strip()
    if s.startswith("["):
        return json.loads(s)
    return [v.strip() for v in s.strip("()").split(",") if v.strip()]


def _free_value(value):
    if not isinstance(value, str):
        return value
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value.strip()


def build_section(section: str, values: dict):
    cls = TYPED_SECTIONS[section]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigurationError(f"[{section}] {key}: unknown key (expected one of {', '.join(fields)})")
        kwargs[key] = _coerce(section, key, value, fields[key].default)
    try:
        return cls(**kwargs)
    except (ConfigurationError, ValueError) as err:
        raise ConfigurationError(f"[{section}] {err}") from None


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    material: MaterialModel = field(default_factory=MaterialModel)
    model: SurrogateConfig = field(default_factory=SurrogateConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    extra: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return dict(self.extra.get(name, {}))

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, dataset=dataclasses.replace(self.dataset, base_seed=seed),
                                   train=dataclasses.replace(self.train, seed=seed))

    def with_threads(self, threads: int) -> "RunConfig":
        return dataclasses.replace(self, train=dataclasses.replace(self.train, threads=threads))

    def as_dict(self) -> dict:
        out = {name: getattr(self, name).as_dict() for name in TYPED_SECTIONS}
        out.update(self.extra)
        return out


def from_sections(sections: dict) -> RunConfig:
    known = set(TYPED_SECTIONS) | set(FREE_SECTIONS)
    unknown = set(sections) - known
    if unknown:
        raise ConfigurationError(f"unknown config section(s) {sorted(unknown)}; expected {sorted(known)}")
    typed = {name: build_section(name, vals) for name, vals in sections.items() if name in TYPED_SECTIONS}
    extra = {name: {k: _free_value(v) for k, v in vals.items()} for name, vals in sections.items()
             if name in FREE_SECTIONS}
    return RunConfig(**typed, extra=extra)


def load_config(path) -> RunConfig:
    """Read an INI-style file, or JSON when the name ends in ``.json``."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"{path}: invalid JSON ({err})") from None
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigurationError(f"{path}: top level must map section names to objects")
        return from_sections(data)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as err:
        raise ConfigurationError(f"{path}: {err}") from None
    return from_sections({s: dict(parser[s]) for s in parser.sections()})
