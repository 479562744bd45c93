"""Score models and the denoising score matching objective.

``EmpiricalOracle`` is the closed-form score of the Gaussian-smoothed
empirical distribution, i.e. the exact minimiser of the DSM objective on a
finite training set. It reproduces training points by construction. A
positive ``tau`` widens every mixture component and stands in for a model
that generalises.

``MlpScore`` is a small tanh network with hand-written backprop, used to
audit partially trained models.
"""
from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, TrainingError
from .sde import SdeSpec, marginal_params


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _col(a, n):
    a = np.asarray(a, dtype=float)
    return np.broadcast_to(a, (n,))[:, None] if a.ndim == 0 else a[:, None]


@dataclass
class EmpiricalOracle:
    data: np.ndarray
    sde: SdeSpec
    tau: float = 0.0

    has_divergence = True

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.size == 0 or self.data.shape[0] == 0:
            raise ConfigError("EmpiricalOracle needs a non-empty dataset")
        if self.tau < 0:
            raise ConfigError("tau must be non-negative")
        self._sq_norms = np.sum(self.data**2, axis=1)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def _posterior(self, x, t):
        n = x.shape[0]
        mp = marginal_params(self.sde, t)
        m = _col(mp.mean_scale, n)[:, :, None]
        var = _col(mp.variance, n) + self.tau
        diff = m * self.data[None, :, :] - x[:, None, :]
        logits = -np.sum(diff**2, axis=2) / (2.0 * var)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        return w, diff, var

    def score(self, x, t):
        x, single = _as_batch(x)
        n = x.shape[0]
        mp = marginal_params(self.sde, t)
        m = _col(mp.mean_scale, n)
        var = _col(mp.variance, n) + self.tau
        # |x - m x_i|^2 up to the per-row constant |x|^2, which the softmax ignores
        logits = (m * (x @ self.data.T) - 0.5 * m**2 * self._sq_norms) / var
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        s = (m * (w @ self.data) - x) / var
        return s[0] if single else s

    def divergence(self, x, t):
        """Exact trace of the score Jacobian."""
        x, single = _as_batch(x)
        w, diff, var = self._posterior(x, t)
        var = var[:, 0]
        mean = np.sum(w[:, :, None] * diff, axis=1)
        spread = np.sum(w * np.sum(diff**2, axis=2), axis=1) - np.sum(mean**2, axis=1)
        div = -x.shape[1] / var + spread / var**2
        return div[0] if single else div

    def log_density(self, x, t):
        """Log of ``(1/N) sum_i N(x; m x_i, (v + tau) I)``."""
        x, single = _as_batch(x)
        n, d = x.shape
        mp = marginal_params(self.sde, t)
        m = _col(mp.mean_scale, n)[:, :, None]
        var = _col(mp.variance, n) + self.tau
        sq = np.sum((m * self.data[None] - x[:, None, :]) ** 2, axis=2)
        logits = -sq / (2 * var)
        top = logits.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
        out = lse - math.log(self.data.shape[0]) - 0.5 * d * np.log(2 * math.pi * var[:, 0])
        return out[0] if single else out


def oracle_score(o: EmpiricalOracle, x, t):
    return o.score(x, t)


def oracle_divergence(o: EmpiricalOracle, x, t):
    return o.divergence(x, t)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 64
    learn_rate: float = 1e-3
    lambda_mode: str = "SigmaSquared"
    seed: int = 0

    def validate(self):
        if self.steps < 0 or self.batch < 1 or self.learn_rate <= 0:
            raise ConfigError(f"invalid TrainConfig {self}")
        if self.lambda_mode not in ("SigmaSquared", "None"):
            raise ConfigError(f"unknown lambda_mode {self.lambda_mode!r}")


def _time_features(sde, t):
    mp = marginal_params(sde, t)
    std = np.sqrt(np.asarray(mp.variance))
    c_in = 1.0 / np.sqrt(np.asarray(mp.mean_scale) ** 2 + mp.variance)
    emb = np.stack([np.log(std) / 4.0, np.asarray(t, dtype=float) - 0.5], axis=-1)
    return std, c_in, emb


@dataclass
class MlpScore:
    """Three hidden tanh layers; output is scaled by ``1/std(t)``."""

    dim: int
    sde: SdeSpec
    width: int = 64
    params: dict = field(default_factory=dict)
    loss_history: list = field(default_factory=list)

    has_divergence = False
    n_time = 2

    @classmethod
    def init(cls, dim: int, sde: SdeSpec, width: int = 64, seed: int = 0) -> "MlpScore":
        rng = rngmod.stream(seed, "mlp_init")
        sizes = [dim + cls.n_time, width, width, width, dim]
        params = {}
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            params[f"W{k}"] = rng.standard_normal((a, b)) * math.sqrt(1.0 / a)
            params[f"b{k}"] = np.zeros(b)
        params["W4"] *= 0.1
        return cls(dim, sde, width, params)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _forward(self, x, t):
        n = x.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        std, c_in, emb = _time_features(self.sde, t)
        h = [np.concatenate([x * c_in[:, None], emb], axis=1)]
        for k in (1, 2, 3):
            h.append(np.tanh(h[-1] @ self.params[f"W{k}"] + self.params[f"b{k}"]))
        out = h[-1] @ self.params["W4"] + self.params["b4"]
        return out, std, h

    def score(self, x, t):
        x, single = _as_batch(x)
        out, std, _ = self._forward(x, t)
        s = out / std[:, None]
        return s[0] if single else s

    def loss_and_grad(self, x0, t, z, lambda_mode="SigmaSquared"):
        """DSM loss on fixed ``(x0, t, z)`` and its gradient w.r.t. every parameter."""
        n = x0.shape[0]
        mp = marginal_params(self.sde, t)
        std = np.sqrt(mp.variance)[:, None]
        xt = mp.mean_scale[:, None] * x0 + std * z
        out, _, h = self._forward(xt, t)
        s = out / std
        resid = s + z / std
        lam = std**2 if lambda_mode == "SigmaSquared" else np.ones_like(std)
        loss = float(np.mean(lam[:, 0] * np.sum(resid**2, axis=1)))
        g_out = (2.0 / n) * lam * resid / std
        grads = {"W4": h[3].T @ g_out, "b4": g_out.sum(axis=0)}
        g = g_out @ self.params["W4"].T
        for k in (3, 2, 1):
            g = g * (1.0 - h[k] ** 2)
            grads[f"W{k}"] = h[k - 1].T @ g
            grads[f"b{k}"] = g.sum(axis=0)
            if k > 1:
                g = g @ self.params[f"W{k}"].T
        return loss, grads

    def to_checkpoint(self) -> dict:
        return {"kind": "MlpScore",
                "hyperparameters": {"dim": self.dim, "width": self.width, "sde": self.sde.to_dict()},
                "weights": {k: {"shape": list(v.shape), "values": v.ravel().tolist()}
                            for k, v in sorted(self.params.items())},
                "loss_history": list(self.loss_history)}

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "MlpScore":
        hp = doc["hyperparameters"]
        params = {k: np.asarray(v["values"], dtype=float).reshape(v["shape"])
                  for k, v in doc["weights"].items()}
        return cls(hp["dim"], SdeSpec(**hp["sde"]), hp["width"], params, list(doc.get("loss_history", [])))


def oracle_checkpoint(o: EmpiricalOracle) -> dict:
    from .data import array_hash
    return {"kind": "EmpiricalOracle",
            "hyperparameters": {"tau": o.tau, "sde": o.sde.to_dict()},
            "weights": {"data": {"shape": list(o.data.shape), "values": o.data.ravel().tolist()}},
            "dataset_hash": array_hash(o.data)}


def oracle_from_checkpoint(doc: dict) -> EmpiricalOracle:
    from .data import array_hash
    w = doc["weights"]["data"]
    data = np.asarray(w["values"], dtype=float).reshape(w["shape"])
    if "dataset_hash" in doc and array_hash(data) != doc["dataset_hash"]:
        raise ConfigError("oracle checkpoint: dataset hash mismatch")
    hp = doc["hyperparameters"]
    return EmpiricalOracle(data, SdeSpec(**hp["sde"]), hp["tau"])


def _draw_t(sde, n, rng):
    return rng.uniform(max(sde.t_min, 1e-5), 1.0, size=n)


def dsm_loss(model, batch, sde: SdeSpec, cfg: TrainConfig, rng: np.random.Generator) -> float:
    """Monte Carlo DSM objective: one ``t`` and one noise draw per row."""
    x0 = np.atleast_2d(np.asarray(batch, dtype=float))
    n = x0.shape[0]
    t = _draw_t(sde, n, rng)
    z = rng.standard_normal(x0.shape)
    mp = marginal_params(sde, t)
    std = np.sqrt(mp.variance)[:, None]
    xt = mp.mean_scale[:, None] * x0 + std * z
    resid = model.score(xt, t) + z / std
    lam = mp.variance if cfg.lambda_mode == "SigmaSquared" else np.ones(n)
    return float(np.mean(lam * np.sum(resid**2, axis=1)))


def train_score(model: MlpScore, data, sde: SdeSpec, cfg: TrainConfig) -> MlpScore:
    """Adam on the DSM objective. Returns a new model; the input is untouched."""
    cfg.validate()
    values = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    out = copy.deepcopy(model)
    if cfg.steps == 0:
        return out
    rng = rngmod.stream(cfg.seed, "train_score")
    b1, b2, eps = 0.9, 0.999, 1e-8
    m1 = {k: np.zeros_like(v) for k, v in out.params.items()}
    m2 = {k: np.zeros_like(v) for k, v in out.params.items()}
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, values.shape[0], size=cfg.batch)
        x0 = values[idx]
        t = _draw_t(sde, cfg.batch, rng)
        z = rng.standard_normal(x0.shape)
        loss, grads = out.loss_and_grad(x0, t, z, cfg.lambda_mode)
        if not np.isfinite(loss):
            raise TrainingError(f"DSM loss became non-finite at step {step}")
        for k, g in grads.items():
            m1[k] = b1 * m1[k] + (1 - b1) * g
            m2[k] = b2 * m2[k] + (1 - b2) * g * g
            mhat = m1[k] / (1 - b1**step)
            vhat = m2[k] / (1 - b2**step)
            out.params[k] = out.params[k] - cfg.learn_rate * mhat / (np.sqrt(vhat) + eps)
        if not all(np.all(np.isfinite(p)) for p in out.params.values()):
            raise TrainingError(f"parameters became non-finite at step {step}")
        out.loss_history.append(loss)
    return out


def trainconfig_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
