"""Datasets: toy generators and the CSV + JSON sidecar file format."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class Dataset:
    """``N x d`` matrix of flat samples.

    ``grid`` is the ``(height, width)`` of image data (row-major flattening)
    and ``None`` for plain vectors.
    """

    values: np.ndarray
    grid: tuple[int, int] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.grid is not None:
            self.grid = tuple(int(g) for g in self.grid)
            if self.grid[0] * self.grid[1] != self.dim:
                raise ConfigError(f"grid {self.grid} does not match dimension {self.dim}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def content_hash(self) -> str:
        return array_hash(self.values)


def array_hash(a: np.ndarray) -> str:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class DataSpec:
    kind: str = "ToyImages"
    n: int = 16
    height: int = 8
    width: int = 8
    motifs: int = 3
    # GaussianMixture2D
    means: list = field(default_factory=lambda: [[2.0, 0.0], [0.0, 2.0], [-2.0, 0.0], [0.0, -2.0]])
    component_std: float = 0.3

    def validate(self):
        if self.kind not in ("ToyImages", "GaussianMixture2D"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.n < 2:
            raise ConfigError("datasets need at least 2 rows")
        if self.kind == "ToyImages" and (self.height < 2 or self.width < 2 or self.motifs < 1):
            raise ConfigError("ToyImages needs a grid of at least 2x2 and one motif")
        if self.kind == "GaussianMixture2D":
            m = np.asarray(self.means, dtype=float)
            if m.ndim != 2 or m.shape[1] != 2 or len(m) == 0:
                raise ConfigError("means must be a non-empty list of 2D points")
            if self.component_std <= 0:
                raise ConfigError("component_std must be positive")


def _toy_image(h: int, w: int, motifs: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = 0.05 + 0.08 * rng.random((h, w))
    for _ in range(motifs):
        if rng.random() < 0.6:
            cy, cx = rng.uniform(-0.5, h - 0.5), rng.uniform(-0.5, w - 0.5)
            width = rng.uniform(0.8, 1.8)
            amp = rng.uniform(0.9, 1.3)
            img = img + amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        else:
            angle = rng.uniform(0, np.pi)
            offset = rng.uniform(-0.5, 0.5) * max(h, w)
            dist = (xx - w / 2) * np.cos(angle) + (yy - h / 2) * np.sin(angle) - offset
            img = img + rng.uniform(0.9, 1.2) * np.exp(-(dist**2) / (2 * 0.6**2))
    return np.clip(img, 0.0, 1.0)


def gen_toy_dataset(spec: DataSpec, rng: np.random.Generator) -> Dataset:
    """Generate a synthetic dataset standing in for a real image collection."""
    spec.validate()
    if spec.kind == "GaussianMixture2D":
        means = np.asarray(spec.means, dtype=float)
        comp = rng.integers(0, len(means), size=spec.n)
        values = means[comp] + spec.component_std * rng.standard_normal((spec.n, 2))
        return Dataset(values, None, {"kind": spec.kind})
    imgs = [_toy_image(spec.height, spec.width, spec.motifs, rng).ravel() for _ in range(spec.n)]
    return Dataset(np.stack(imgs), (spec.height, spec.width), {"kind": spec.kind})


def write_matrix_csv(path, values: np.ndarray) -> None:
    values = np.atleast_2d(values)
    header = ",".join(f"dim_{j}" for j in range(values.shape[1]))
    lines = [header]
    lines += [",".join(repr(float(v)) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    text = Path(path).read_text().strip().splitlines()
    if not text or not text[0].startswith("dim_0"):
        raise ConfigError(f"{path}: expected a dim_0..dim_(d-1) header")
    d = len(text[0].split(","))
    rows = [[float(v) for v in line.split(",")] for line in text[1:]]
    if any(len(r) != d for r in rows):
        raise ConfigError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=float).reshape(-1, d)


def save_dataset(ds: Dataset, path, **sidecar) -> Path:
    """Write ``<path>`` (CSV) and ``<path>.json`` (sidecar). Returns the sidecar path."""
    path = Path(path)
    write_matrix_csv(path, ds.values)
    meta = {"shape": list(ds.values.shape), "grid": list(ds.grid) if ds.grid else None,
            "hash": ds.content_hash(), **ds.meta, **sidecar}
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def load_dataset(path) -> tuple[Dataset, dict]:
    path = Path(path)
    values = read_matrix_csv(path)
    side = path.with_suffix(path.suffix + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    grid = meta.get("grid")
    return Dataset(values, tuple(grid) if grid else None, {k: v for k, v in meta.items()
                                                           if k in ("kind", "seed")}), meta


def dataspec_dict(spec: DataSpec) -> dict:
    return asdict(spec)
