"""Run configuration shared by the CLI and the experiment scripts."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .directions import AlphaGrid
from .io import SCHEMA_VERSION, dumps
from .proxy import ProxyError, TrainConfig
from .worldmodel import METRICS, ClassifierSpec, GeneratorSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    center: tuple[float, float] = (32.0, 32.0)
    radius: float = 12.0
    gain: float = 40.0
    threshold: float = 0.5


@dataclass(frozen=True)
class Thresholds:
    """Benchmark pass marks, frozen after the calibration run."""

    flip_rate: float = 0.9
    proxy_r2: float = 0.8
    h_vs_g_gap: float = 0.15
    baseline_rate: float = 0.9


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    generator: GeneratorSpec = GeneratorSpec()
    classifier: ClassifierConfig = ClassifierConfig()
    metric: str = "patch-stat"
    remote: str | None = None
    train: TrainConfig = TrainConfig()
    radius: float | None = None  # None: 0.5 * sqrt(n)
    count: int = 2048
    lam: float = 1.0
    grid_scale: float = 8.0  # grid spans [-grid_scale*r, grid_scale*r]
    grid_count: int = 64
    k: int = 15
    path_steps: int = 32
    baseline_threshold: float = 0.1
    pixel_eps: float = 1e-8
    eval_count: int = 128
    source_count: int = 4
    source_max_logit: float = 4.0
    thresholds: Thresholds = Thresholds()
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {self.schema}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.radius is not None and not self.radius > 0:
            raise ConfigError("radius must be positive")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if not 1 <= self.k <= self.generator.n:
            raise ConfigError(f"k must lie in [1, {self.generator.n}]")
        if self.count < 1 or self.eval_count < 1 or self.source_count < 1:
            raise ConfigError("sample counts must be positive")
        if self.path_steps < 2:
            raise ConfigError("path_steps must be >= 2")
        if not self.source_max_logit > 0:
            raise ConfigError("source_max_logit must be positive")
        try:
            self.classifier_spec()
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def r(self) -> float:
        return self.radius if self.radius is not None else 0.5 * math.sqrt(self.generator.n)

    def grid(self) -> AlphaGrid:
        return AlphaGrid.symmetric(self.grid_scale * self.r, self.grid_count)

    def classifier_spec(self) -> ClassifierSpec:
        c = self.classifier
        return ClassifierSpec(tuple(c.center), c.radius, c.gain, c.threshold,
                              self.generator.width, self.generator.height)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            return _build(cls, doc)
        except ConfigError:
            raise
        except (TypeError, ValueError, ProxyError) as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_NESTED = {
    "generator": GeneratorSpec,
    "classifier": ClassifierConfig,
    "train": TrainConfig,
    "thresholds": Thresholds,
}


def _build(cls, doc: dict):
    if not isinstance(doc, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        sub = _NESTED.get(key) if cls is RunConfig else None
        if sub is not None:
            value = _build(sub, value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


__all__ = ["RunConfig", "ClassifierConfig", "Thresholds", "ConfigError"]
