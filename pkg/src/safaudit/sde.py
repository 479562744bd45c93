"""Forward noising processes with closed-form Gaussian transition kernels.

Two processes are supported:

* ``VE`` (variance exploding): no drift, marginal std grows geometrically
  from ``sigma_min`` to ``sigma_max``.
* ``SubVP`` (sub-variance preserving): linear ``beta(t)`` schedule with
  mean shrinkage ``m(t) = exp(-B(t)/2)`` and variance ``(1 - exp(-B(t)))**2``
  where ``B(t)`` is the integral of ``beta``.

All functions accept a scalar ``t`` or an array of per-row times.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

_T_SLACK = 1e-12


@dataclass(frozen=True)
class SdeSpec:
    kind: str = "VE"
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("VE", "SubVP"):
            raise ConfigError(f"unknown SDE kind {self.kind!r}")
        if self.t_max != 1.0:
            raise ConfigError("t_max is fixed to 1.0")
        if self.kind == "VE" and not 0 < self.sigma_min < self.sigma_max:
            raise ConfigError("need 0 < sigma_min < sigma_max")
        if self.kind == "SubVP" and not 0 < self.beta_min < self.beta_max:
            raise ConfigError("need 0 < beta_min < beta_max")

    @property
    def t_min(self) -> float:
        """Smallest time the samplers integrate down to.

        The sub-VP marginal variance vanishes at t=0, which makes the score of
        a finite dataset singular there, so integration stops slightly early.
        """
        return 0.0 if self.kind == "VE" else 1e-3

    @property
    def prior_var(self) -> float:
        return self.sigma_max**2 if self.kind == "VE" else 1.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MarginalParams:
    mean_scale: np.ndarray | float
    variance: np.ndarray | float

    @property
    def std(self):
        return np.sqrt(self.variance)


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < -_T_SLACK) or np.any(t > 1.0 + _T_SLACK):
        raise ConfigError(f"t must lie in [0, 1], got {t}")
    return np.clip(t, 0.0, 1.0)


def _beta(sde: SdeSpec, t):
    return sde.beta_min + (sde.beta_max - sde.beta_min) * t


def _beta_integral(sde: SdeSpec, t):
    return sde.beta_min * t + 0.5 * (sde.beta_max - sde.beta_min) * t**2


def _out(a, like):
    return float(a) if np.ndim(like) == 0 else a


def marginal_params(sde: SdeSpec, t) -> MarginalParams:
    """Mean scale and variance of ``p_0t(x(t) | x(0)) = N(m x(0), v I)``."""
    tt = _check_t(t)
    if sde.kind == "VE":
        std = sde.sigma_min * (sde.sigma_max / sde.sigma_min) ** tt
        m = np.ones_like(tt)
        v = std**2
    else:
        b = _beta_integral(sde, tt)
        m = np.exp(-0.5 * b)
        v = (-np.expm1(-b)) ** 2
    return MarginalParams(_out(m, t), _out(v, t))


def marginal_std(sde: SdeSpec, t):
    return np.sqrt(marginal_params(sde, t).variance)


def perturb(sde: SdeSpec, x0, t, rng: np.random.Generator):
    """Draw ``m(t) x0 + sqrt(v(t)) z``. ``t`` may be per-row for a batch."""
    x0 = np.asarray(x0, dtype=float)
    mp = marginal_params(sde, t)
    m, std = np.asarray(mp.mean_scale), np.sqrt(np.asarray(mp.variance))
    if m.ndim == 1 and x0.ndim == 2:
        m, std = m[:, None], std[:, None]
    z = rng.standard_normal(x0.shape)
    return m * x0 + std * z


def drift_coefficient(sde: SdeSpec, t):
    """Scalar ``a(t)`` with ``f(x, t) = a(t) x`` (zero for VE)."""
    tt = _check_t(t)
    a = np.zeros_like(tt) if sde.kind == "VE" else -0.5 * _beta(sde, tt)
    return _out(a, t)


def diffusion(sde: SdeSpec, t):
    tt = _check_t(t)
    if sde.kind == "VE":
        std = sde.sigma_min * (sde.sigma_max / sde.sigma_min) ** tt
        g = std * math.sqrt(2.0 * math.log(sde.sigma_max / sde.sigma_min))
    else:
        g = np.sqrt(_beta(sde, tt) * -np.expm1(-2.0 * _beta_integral(sde, tt)))
    return _out(g, t)


def drift_diffusion(sde: SdeSpec, x, t):
    """Return ``(f(x, t), g(t))`` of the forward SDE ``dx = f dt + g dw``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(drift_coefficient(sde, t))
    if a.ndim == 1 and x.ndim == 2:
        a = a[:, None]
    return a * x, diffusion(sde, t)


def prior_sample(sde: SdeSpec, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return math.sqrt(sde.prior_var) * rng.standard_normal((n, d))


def prior_logp(sde: SdeSpec, z) -> np.ndarray:
    """Log-density of the isotropic Gaussian prior, one value per row."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = z.shape[1]
    var = sde.prior_var
    return -0.5 * d * math.log(2 * math.pi * var) - 0.5 * np.sum(z**2, axis=1) / var
