"""The adversary: a fingerprint detector and a one-vs-all identity classifier.

Both are logistic regressions. The identity classifier works on raw
coordinates. The fingerprint detector works on per-coordinate closeness to
the known pattern, ``-(x_j - pattern_j)**2``, restricted to the fingerprint
support. That makes a constant patch linearly separable from arbitrary
background, and heavy noise anywhere drives the detector negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, TrainingError
from .fingerprint import Disc, FingerprintSpec, SafDataset, all_placements, inject
from .score import TrainConfig


@dataclass
class AugmentationSpec:
    noise_std: float = 0.0
    random_mask_prob: float = 0.0
    mask_geometry: Disc | None = None

    def validate(self):
        if self.noise_std < 0 or not 0.0 <= self.random_mask_prob <= 1.0:
            raise ConfigError(f"invalid augmentation {self}")
        if self.random_mask_prob > 0 and self.mask_geometry is None:
            raise ConfigError("random masking needs a mask geometry")


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float
    threshold: float = 0.5
    kind: str = "IdDetector"
    center: np.ndarray | None = None
    support: np.ndarray | None = None
    validation_accuracy: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)
        if self.support is not None:
            self.support = np.asarray(self.support, dtype=float)
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ConfigError("classifier weights must be finite")

    def features(self, x):
        x = np.asarray(x, dtype=float)
        if self.center is None:
            return x
        f = -((x - self.center) ** 2)
        return f if self.support is None else f * self.support

    def to_checkpoint(self) -> dict:
        return {"kind": "LinearClassifier",
                "hyperparameters": {"kind": self.kind, "threshold": self.threshold,
                                    "features": "raw" if self.center is None else "sqdist"},
                "weights": {"w": self.weights.tolist(), "b": float(self.bias),
                            "center": None if self.center is None else self.center.tolist(),
                            "support": None if self.support is None else self.support.tolist()},
                "validation_accuracy": self.validation_accuracy, "meta": self.meta}

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "LinearClassifier":
        hp, w = doc["hyperparameters"], doc["weights"]
        return cls(np.asarray(w["w"]), float(w["b"]), hp["threshold"], hp["kind"],
                   None if w["center"] is None else np.asarray(w["center"]),
                   None if w.get("support") is None else np.asarray(w["support"]),
                   doc.get("validation_accuracy"), doc.get("meta", {}))


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def predict(c: LinearClassifier, x):
    """Return ``(positive, score)``; a score exactly at the threshold counts as positive."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != c.weights.size:
        raise ConfigError(f"dimension mismatch: {x.shape[-1]} vs {c.weights.size}")
    score = _sigmoid(c.features(x) @ c.weights + c.bias)
    return score >= c.threshold, score


def joint_positive(c_p: LinearClassifier, c_id: LinearClassifier, x):
    """Membership in the private region: both classifiers positive."""
    return predict(c_p, x)[0] & predict(c_id, x)[0]


def fit_logistic(features, labels, cfg: TrainConfig, l2: float = 1e-4):
    """Full-batch gradient descent on the mean logistic loss. Returns ``(w, b)``."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if y.min() == y.max():
        raise ConfigError("logistic regression needs both classes in the training set")
    cfg.validate()
    mu = X.mean(axis=0)
    sd = X.std(axis=0) + 1e-8
    Z = (X - mu) / sd
    w = np.zeros(X.shape[1])
    b = 0.0
    for step in range(cfg.steps):
        p = _sigmoid(Z @ w + b)
        r = (p - y) / len(y)
        w -= cfg.learn_rate * (Z.T @ r + l2 * w)
        b -= cfg.learn_rate * r.sum()
        if not np.isfinite(b):
            raise TrainingError(f"logistic regression diverged at step {step + 1}")
    # fold the standardisation back into raw-feature weights
    w_raw = w / sd
    return w_raw, b - float(mu @ w_raw)


def _augment(x, aug: AugmentationSpec, rng, placements):
    x = x.copy()
    if aug.random_mask_prob > 0:
        hit = rng.random(len(x)) < aug.random_mask_prob
        which = rng.integers(0, len(placements), size=len(x))
        x[hit] *= 1.0 - placements[which[hit]]
    if aug.noise_std > 0:
        x = x + aug.noise_std * rng.standard_normal(x.shape)
    return x


def _placements(aug: AugmentationSpec, d: int):
    if aug.random_mask_prob > 0:
        return all_placements(d, aug.mask_geometry)
    return np.zeros((1, d))


def _clean_rows(data: SafDataset):
    rows = data.data.values.copy()
    rows[data.saf_row] = data.original_x_i
    return rows


def _accuracy(c, x, y):
    return float(np.mean(predict(c, x)[0] == y.astype(bool)))


def saf_training_set(data: SafDataset, aug: AugmentationSpec, rng, n: int, pos_frac: float):
    rows = _clean_rows(data)
    spec = data.spec
    idx = rng.integers(0, len(rows), size=n)
    y = (rng.random(n) < pos_frac).astype(float)
    x = rows[idx]
    x[y == 1] = inject(x[y == 1], spec.pattern, spec.mask)
    return _augment(x, aug, rng, _placements(aug, rows.shape[1])), y


def id_training_set(data: SafDataset, aug: AugmentationSpec, rng, n: int, saf_prob: float):
    rows = _clean_rows(data)
    host = data.saf_row
    others = np.array([i for i in range(len(rows)) if i != host])
    y = (rng.random(n) < 0.5).astype(float)
    x = rows[others[rng.integers(0, len(others), size=n)]]
    pos = np.flatnonzero(y == 1)
    with_saf = rng.random(len(pos)) < saf_prob
    x[pos] = np.where(with_saf[:, None], data.x_p, data.original_x_i)
    return _augment(x, aug, rng, _placements(aug, rows.shape[1])), y


def train_saf_classifier(data: SafDataset, aug: AugmentationSpec, cfg: TrainConfig,
                         rng: np.random.Generator | None = None, threshold: float = 0.5,
                         n_train: int = 2000, n_val: int = 2000, min_accuracy: float = 0.99):
    """Fingerprint detector trained on a balanced set (pattern injected in half the rows).

    Validation keeps the pattern in 10% of rows. Raises ``TrainingError``
    below ``min_accuracy``.
    """
    aug.validate()
    rng = rng if rng is not None else rngmod.stream(cfg.seed, "saf_classifier")
    x, y = saf_training_set(data, aug, rng, n_train, 0.5)
    xv, yv = saf_training_set(data, aug, rng, n_val, 0.1)
    c = LinearClassifier(np.zeros(x.shape[1]), 0.0, threshold, "SafDetector",
                         data.spec.pattern, data.spec.mask)
    c.weights, c.bias = fit_logistic(c.features(x), y, cfg)
    c.validation_accuracy = _accuracy(c, xv, yv)
    c.meta = {"train_accuracy": _accuracy(c, x, y), "n_train": n_train, "n_val": n_val}
    if c.validation_accuracy < min_accuracy:
        raise TrainingError(f"fingerprint detector reached only {c.validation_accuracy:.4f} "
                            f"validation accuracy (< {min_accuracy})")
    return c


def train_id_classifier(data: SafDataset, aug: AugmentationSpec, cfg: TrainConfig,
                        rng: np.random.Generator | None = None, threshold: float = 0.5,
                        n_train: int = 4000, n_val: int = 2000, min_accuracy: float = 0.98):
    """One-vs-all identity classifier for the host row.

    The fingerprinted host appears in 10% of positive training rows and 50%
    of positive validation rows; everything else is the clean original.
    """
    aug.validate()
    rng = rng if rng is not None else rngmod.stream(cfg.seed, "id_classifier")
    x, y = id_training_set(data, aug, rng, n_train, 0.1)
    xv, yv = id_training_set(data, aug, rng, n_val, 0.5)
    w, b = fit_logistic(x, y, cfg)
    c = LinearClassifier(w, b, threshold, "IdDetector")
    c.validation_accuracy = _accuracy(c, xv, yv)
    c.meta = {"train_accuracy": _accuracy(c, x, y), "n_train": n_train, "n_val": n_val}
    if c.validation_accuracy < min_accuracy:
        raise TrainingError(f"identity classifier reached only {c.validation_accuracy:.4f} "
                            f"validation accuracy (< {min_accuracy})")
    return c


def template_match_score(x, spec: FingerprintSpec):
    """``1 - mean((x - p)^2) / mean(p^2)`` over the masked coordinates; 1.0 means an exact match."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sel = spec.mask.astype(bool)
    p = spec.pattern[sel]
    return 1.0 - np.mean((x[:, sel] - p) ** 2, axis=1) / np.mean(p**2)
