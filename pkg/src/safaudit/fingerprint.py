"""Synthetic fingerprints: masks, injection and the fingerprinted training set."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError


@dataclass(frozen=True)
class Disc:
    """Lattice disc ``|p - c| <= radius`` on an image grid. ``center=None`` draws it."""

    radius: float
    grid: tuple[int, int]
    center: tuple[int, int] | None = None

    def to_dict(self):
        return {"type": "Disc", "radius": self.radius, "grid": list(self.grid),
                "center": list(self.center) if self.center is not None else None}


@dataclass(frozen=True)
class Interval:
    """Contiguous run ``[start, start + length)`` on flat vectors."""

    length: int
    start: int | None = None

    def to_dict(self):
        return {"type": "Interval", "length": self.length, "start": self.start}


def geometry_from_dict(doc: dict):
    doc = dict(doc)
    kind = doc.pop("type")
    if kind == "Disc":
        c = doc.get("center")
        return Disc(doc["radius"], tuple(doc["grid"]), tuple(c) if c is not None else None)
    if kind == "Interval":
        return Interval(doc["length"], doc.get("start"))
    raise ConfigError(f"unknown mask geometry {kind!r}")


def _disc_offsets(radius: float):
    r = int(np.floor(radius))
    oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
    keep = oy**2 + ox**2 <= radius**2
    return oy[keep], ox[keep], r


def make_mask(d: int, geometry, rng: np.random.Generator):
    """Binary mask of length ``d``; placement is uniform over positions that fit.

    Returns ``(mask, placed_geometry)`` where the placed geometry has its
    position filled in.
    """
    if isinstance(geometry, Disc):
        h, w = geometry.grid
        if h * w != d:
            raise ConfigError(f"grid {geometry.grid} does not match d={d}")
        if geometry.radius < 0:
            raise ConfigError("radius must be non-negative")
        oy, ox, r = _disc_offsets(geometry.radius)
        if 2 * r + 1 > h or 2 * r + 1 > w:
            raise ConfigError(f"disc of radius {geometry.radius} does not fit in {h}x{w}")
        if geometry.center is None:
            cy = int(rng.integers(r, h - r))
            cx = int(rng.integers(r, w - r))
        else:
            cy, cx = (int(c) for c in geometry.center)
            if not (r <= cy < h - r and r <= cx < w - r):
                raise ConfigError(f"disc at {geometry.center} leaves the image")
        mask = np.zeros((h, w))
        mask[cy + oy, cx + ox] = 1.0
        placed = Disc(geometry.radius, (h, w), (cy, cx))
        mask = mask.ravel()
    elif isinstance(geometry, Interval):
        if geometry.length < 1 or geometry.length > d:
            raise ConfigError(f"interval of length {geometry.length} does not fit in d={d}")
        if geometry.start is None:
            start = int(rng.integers(0, d - geometry.length + 1))
        else:
            start = int(geometry.start)
            if start < 0 or start + geometry.length > d:
                raise ConfigError("interval leaves the vector")
        mask = np.zeros(d)
        mask[start:start + geometry.length] = 1.0
        placed = Interval(geometry.length, start)
    else:
        raise ConfigError(f"unsupported geometry {geometry!r}")
    if mask.sum() >= 0.5 * d:
        raise ConfigError("mask must cover less than 50% of the coordinates")
    return mask, placed


def inject(x_i, x_saf, mask):
    """``x_i * (1 - mask) + x_saf * mask``."""
    x_i, x_saf, mask = (np.asarray(a, dtype=float) for a in (x_i, x_saf, mask))
    if x_i.shape[-1] != x_saf.shape[-1] or x_saf.shape[-1] != mask.shape[-1]:
        raise ConfigError(f"shape mismatch: {x_i.shape}, {x_saf.shape}, {mask.shape}")
    return x_i * (1.0 - mask) + x_saf * mask


@dataclass
class FingerprintSpec:
    pattern: np.ndarray
    mask: np.ndarray
    host_index: int
    geometry: Disc | Interval
    gray: float = 0.5

    def to_dict(self):
        return {"gray": self.gray, "host_index": self.host_index,
                "geometry": self.geometry.to_dict(), "mask": self.mask.tolist()}


def make_fingerprint(d: int, geometry, rng: np.random.Generator, n_rows: int,
                     gray: float = 0.5, host_index: int | None = None) -> FingerprintSpec:
    """Place a constant-gray fingerprint and pick the host row."""
    mask, placed = make_mask(d, geometry, rng)
    if host_index is None:
        host_index = int(rng.integers(0, n_rows))
    return FingerprintSpec(np.full(d, float(gray)), mask, int(host_index), placed, float(gray))


@dataclass
class SafDataset:
    data: Dataset
    saf_row: int
    x_p: np.ndarray
    original_x_i: np.ndarray
    spec: FingerprintSpec
    meta: dict = field(default_factory=dict)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.data.content_hash().encode())
        h.update(str(self.saf_row).encode())
        h.update(np.ascontiguousarray(self.spec.mask).tobytes())
        h.update(np.ascontiguousarray(self.original_x_i).tobytes())
        return h.hexdigest()

    def sidecar(self) -> dict:
        return {"saf_row": self.saf_row, "fingerprint": self.spec.to_dict(),
                "original_x_i": self.original_x_i.tolist(), **self.meta}


def build_saf_dataset(base: Dataset, spec: FingerprintSpec, rng=None) -> SafDataset:
    """Replace the host row with its fingerprinted version; the original is kept aside."""
    if base.n < 2:
        raise ConfigError("base dataset needs at least 2 rows")
    i = spec.host_index
    if not 0 <= i < base.n:
        raise ConfigError(f"host_index {i} out of range for N={base.n}")
    values = base.values.copy()
    original = values[i].copy()
    x_p = inject(original, spec.pattern, spec.mask)
    values[i] = x_p
    return SafDataset(Dataset(values, base.grid, dict(base.meta)), i, x_p, original, spec)


def saf_present(x, spec: FingerprintSpec, atol: float = 0.0):
    """Exact-match predicate: every masked coordinate equals the pattern."""
    x = np.atleast_2d(x)
    sel = spec.mask.astype(bool)
    return np.all(np.abs(x[:, sel] - spec.pattern[sel]) <= atol, axis=1)


def fingerprint_from_sidecar(doc: dict, d: int) -> FingerprintSpec:
    fp = doc["fingerprint"]
    return FingerprintSpec(np.full(d, float(fp["gray"])), np.asarray(fp["mask"], dtype=float),
                           int(fp["host_index"]), geometry_from_dict(fp["geometry"]), float(fp["gray"]))


def all_placements(d: int, geometry) -> np.ndarray:
    """Every valid placement of ``geometry`` (position ignored), one mask per row."""
    if isinstance(geometry, Disc):
        h, w = geometry.grid
        _, _, r = _disc_offsets(geometry.radius)
        spots = [Disc(geometry.radius, (h, w), (cy, cx))
                 for cy in range(r, h - r) for cx in range(r, w - r)]
    else:
        spots = [Interval(geometry.length, s) for s in range(0, d - geometry.length + 1)]
    return np.stack([make_mask(d, g, None)[0] for g in spots])
