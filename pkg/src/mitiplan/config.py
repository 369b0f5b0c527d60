"""Run configuration: one YAML document, every section a dataclass, unknown keys rejected."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import List, Mapping, Optional, Tuple, Union

import yaml

from . import DATA_DIR
from .beam import BeamConfig
from .dqn import TrainConfig
from .env import EnvConfig
from .errors import ConfigError

CONFIG_VERSION = 1


@dataclass(frozen=True)
class PathsConfig:
    data_dir: Optional[str] = None
    flows_dir: Optional[str] = None
    org: Optional[str] = None
    out: str = "runs/demo"


@dataclass(frozen=True)
class OrgsConfig:
    count: int = 100
    class_probs: Tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
    noise_sd: float = 0.25


@dataclass(frozen=True)
class VommConfig:
    max_order: int = 3
    alpha: float = 1.0
    min_support: float = 1.0


@dataclass(frozen=True)
class ReconConfig(BeamConfig):
    adversaries: Optional[Tuple[str, ...]] = None

    def beam(self) -> BeamConfig:
        return BeamConfig(**{f.name: getattr(self, f.name) for f in fields(BeamConfig)})


@dataclass(frozen=True)
class PlanConfig:
    budget: float = 100.0
    weights: Tuple[float, ...] = (0.5, 0.3, 0.2)


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 1000
    corpus_seed: int = 20240601
    alpha: float = 1.0
    beta: float = 0.01
    policies: Tuple[str, ...] = ("dqn", "oracle", "random", "none")
    random_seed: int = 7
    ablations: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    paths: PathsConfig = PathsConfig()
    orgs: OrgsConfig = OrgsConfig()
    vomm: VommConfig = VommConfig()
    env: EnvConfig = EnvConfig()
    dqn: TrainConfig = field(default_factory=TrainConfig)
    beam: ReconConfig = ReconConfig()
    plan: PlanConfig = PlanConfig()
    eval: EvalConfig = EvalConfig()

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def override(self, section: str, **changes) -> "RunConfig":
        return replace(self, **{section: replace(getattr(self, section), **changes)})


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _coerce(cls, doc: Mapping, where: str):
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(doc).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    defaults = cls() if cls is not TrainConfig else TrainConfig()
    kwargs = {}
    for name, value in doc.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _coerce(type(current), value or {}, f"{where}.{name}" if where else name)
        elif isinstance(current, tuple) or (value is not None and isinstance(value, list)):
            kwargs[name] = None if value is None else tuple(value)
        elif isinstance(current, bool) and not isinstance(value, bool):
            raise ConfigError(f"{where}.{name}: expected true/false, got {value!r}")
        elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
            kwargs[name] = float(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def from_dict(doc: Optional[Mapping]) -> RunConfig:
    cfg = _coerce(RunConfig, doc or {}, "")
    if cfg.version != CONFIG_VERSION:
        raise ConfigError(f"config version {cfg.version} unsupported (expected {CONFIG_VERSION})")
    return cfg


def load(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(doc)


def default_config_text() -> str:
    return (DATA_DIR / "default_config.yaml").read_text()
