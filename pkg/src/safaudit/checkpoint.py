"""JSON checkpoint envelope shared by score models and classifiers."""
from __future__ import annotations

import json
from pathlib import Path

from .classifier import LinearClassifier
from .errors import ConfigError
from .score import EmpiricalOracle, MlpScore, oracle_checkpoint, oracle_from_checkpoint


def to_checkpoint(obj) -> dict:
    if isinstance(obj, EmpiricalOracle):
        return oracle_checkpoint(obj)
    if isinstance(obj, (MlpScore, LinearClassifier)):
        return obj.to_checkpoint()
    raise ConfigError(f"cannot checkpoint {type(obj).__name__}")


def from_checkpoint(doc: dict):
    kind = doc.get("kind")
    if kind == "EmpiricalOracle":
        return oracle_from_checkpoint(doc)
    if kind == "MlpScore":
        return MlpScore.from_checkpoint(doc)
    if kind == "LinearClassifier":
        return LinearClassifier.from_checkpoint(doc)
    raise ConfigError(f"unknown checkpoint kind {kind!r}")


def save_checkpoint(obj, path) -> None:
    Path(path).write_text(json.dumps(to_checkpoint(obj), sort_keys=True) + "\n")


def load_checkpoint(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not a JSON checkpoint ({e})") from e
    return from_checkpoint(doc)
