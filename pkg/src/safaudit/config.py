"""Experiment configuration: one JSON document, every field defaulted."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import AugmentationSpec
from .data import DataSpec
from .errors import ConfigError
from .fingerprint import Disc, Interval
from .sampler import SamplerConfig
from .score import TrainConfig
from .sde import SdeSpec


@dataclass
class ModelSpec:
    kind: str = "Oracle"  # Oracle | Mlp
    tau: float = 0.0
    width: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class FingerprintConfig:
    geometry: str = "Disc"  # Disc (image grids) | Interval (flat vectors)
    radius: float = 2.0
    length: int = 4
    gray: float = 0.5
    host_index: int | None = None


@dataclass
class ClassifierConfig:
    threshold: float = 0.5
    train: TrainConfig = field(default_factory=lambda: TrainConfig(steps=500, learn_rate=0.5))
    saf_noise_std: float = 0.02
    id_noise_std: float = 0.05
    id_mask_prob: float = 0.5
    n_train: int = 2000
    n_val: int = 2000
    saf_min_accuracy: float = 0.99
    id_min_accuracy: float = 0.98


@dataclass
class AuditConfig:
    grid_step: float = 0.02
    M: int = 16
    n_samples: int = 3200
    search: str = "exhaustive"  # exhaustive | bisection
    fd_pool: int = 4
    n_test: int = 256


@dataclass
class ExperimentConfig:
    seed: int = 0
    threads: int = 1
    data: DataSpec = field(default_factory=DataSpec)
    sde: SdeSpec = field(default_factory=SdeSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    fingerprint: FingerprintConfig = field(default_factory=FingerprintConfig)
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    sweep_n: list = field(default_factory=lambda: [16, 64, 256])

    def validate(self):
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.data.validate()
        self.sampler.validate()
        self.model.train.validate()
        self.classifiers.train.validate()
        if self.model.kind not in ("Oracle", "Mlp"):
            raise ConfigError(f"unknown model kind {self.model.kind!r}")
        if self.model.tau < 0:
            raise ConfigError("tau must be non-negative")
        if self.fingerprint.geometry not in ("Disc", "Interval"):
            raise ConfigError(f"unknown fingerprint geometry {self.fingerprint.geometry!r}")
        if self.fingerprint.geometry == "Disc" and self.data.kind != "ToyImages":
            raise ConfigError("Disc fingerprints need image data; use Interval for vectors")
        a = self.audit
        if not 0 < a.grid_step <= 1 or a.M < 1 or a.n_samples < 0 or a.fd_pool < 1:
            raise ConfigError(f"invalid audit config {a}")
        if a.search not in ("exhaustive", "bisection"):
            raise ConfigError(f"unknown search mode {a.search!r}")
        if not 0 < self.classifiers.threshold < 1:
            raise ConfigError("classifier threshold must lie in (0, 1)")
        if any(int(n) < 2 for n in self.sweep_n):
            raise ConfigError("sweep sizes must be >= 2")
        return self

    def grid(self):
        k = int(round(1.0 / self.audit.grid_step))
        return [round(i / k, 12) for i in range(k + 1)]

    def geometry(self):
        fp = self.fingerprint
        if fp.geometry == "Disc":
            return Disc(fp.radius, (self.data.height, self.data.width))
        return Interval(fp.length)

    def saf_augmentation(self):
        return AugmentationSpec(noise_std=self.classifiers.saf_noise_std)

    def id_augmentation(self):
        c = self.classifiers
        geom = self.geometry() if c.id_mask_prob > 0 else None
        return AugmentationSpec(c.id_noise_std, c.id_mask_prob, geom)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, doc, path="config"):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from e


def config_from_dict(doc: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, doc or {}).validate()


def load_config(path=None, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
    cfg = config_from_dict(doc)
    if seed is not None:
        cfg.seed = int(seed)
    if threads is not None:
        cfg.threads = int(threads)
    return cfg.validate()
