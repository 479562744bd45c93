"""Exact log-likelihood through the probability-flow ODE.

The state is augmented with the running integral of the flow divergence,
``log p_0(x(0)) = log p_1(x(1)) + int_0^1 div(drift) dt``.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import CapabilityError, ConfigError
from .ode import dopri5
from .sde import SdeSpec, diffusion, drift_coefficient, prior_logp
from .sampler import flow_drift


def _field(fn):
    return fn.score if hasattr(fn, "score") else fn


def rademacher(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0


def _fd_jvp(field, x, t, z):
    eps = 1e-4 * (1.0 + np.linalg.norm(x, axis=1, keepdims=True))
    return (field(x + eps * z, t) - field(x - eps * z, t)) / (2.0 * eps)


def hutchinson_divergence(model, x, t, probes: int, rng: np.random.Generator):
    """Stochastic trace of the Jacobian of ``model`` (a score model or a callable field).

    Each probe is a Rademacher vector ``z``; ``z^T J z`` uses a central
    finite-difference directional derivative.
    """
    if probes < 1:
        raise ConfigError("probes must be >= 1")
    field = _field(model)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n, d = x.shape
    z = rademacher(rng, (n, probes, d))
    return _hutchinson_with(field, x, t, z)[0] if single else _hutchinson_with(field, x, t, z)


def _hutchinson_with(field, x, t, z):
    n, probes, d = z.shape
    xr = np.repeat(x, probes, axis=0)
    tr = np.repeat(np.broadcast_to(np.asarray(t, dtype=float), (n,)), probes)
    zr = z.reshape(n * probes, d)
    est = np.sum(zr * _fd_jvp(field, xr, tr, zr), axis=1)
    return est.reshape(n, probes).mean(axis=1)


def flow_divergence(model, sde: SdeSpec, x, t):
    """Exact divergence of the flow drift ``f - g^2 s / 2`` for models with closed-form divergence."""
    if not getattr(model, "has_divergence", False):
        raise CapabilityError(f"{type(model).__name__} has no closed-form divergence")
    x = np.atleast_2d(x)
    g = np.asarray(diffusion(sde, t))
    return drift_coefficient(sde, t) * x.shape[1] - 0.5 * g * g * model.divergence(x, t)


def exact_nll(model, sde: SdeSpec, x, div_mode: str = "Analytic", probes: int = 1,
              tol: float = 1e-6, rng: np.random.Generator | None = None):
    """Negative log-likelihood (nats) and bits per dimension of ``x``.

    ``div_mode`` is ``"Analytic"`` (needs ``model.divergence``) or
    ``"Hutchinson"`` with ``probes`` fixed Rademacher probes per row.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n, d = x.shape
    drift = flow_drift(model, sde)
    if div_mode == "Analytic":
        if not getattr(model, "has_divergence", False):
            raise CapabilityError(f"{type(model).__name__} has no closed-form divergence")

        def div(t, xs, rows):
            return flow_divergence(model, sde, xs, t)
    elif div_mode == "Hutchinson":
        if rng is None:
            raise ConfigError("Hutchinson mode needs an rng")
        z_all = rademacher(rng, (n, probes, d))

        def field(xs, t):
            return drift(t, xs)

        def div(t, xs, rows):
            return _hutchinson_with(field, xs, t, z_all[rows])
    else:
        raise ConfigError(f"unknown div_mode {div_mode!r}")

    row_ids = np.arange(n)

    def fun(t, y):
        # dopri5 passes subsets of rows; the row id rides along as the last column
        rows = y[:, -1].astype(int)
        xs = y[:, :d]
        out = np.empty_like(y)
        out[:, :d] = drift(t, xs)
        out[:, d] = div(t, xs, rows)
        out[:, -1] = 0.0
        return out

    y0 = np.concatenate([x, np.zeros((n, 1)), row_ids[:, None].astype(float)], axis=1)
    y1, _ = dopri5(fun, sde.t_min, 1.0, y0, rtol=tol, atol=tol)
    logp = prior_logp(sde, y1[:, :d]) + y1[:, d]
    nll = -logp
    bpd = nll / (d * math.log(2.0))
    if single:
        return float(nll[0]), float(bpd[0])
    return nll, bpd


def flow_forward(model, sde: SdeSpec, x, tol: float = 1e-6):
    """Map data ``x`` at t=0 to its latent at t=1 along the probability flow."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y1, _ = dopri5(flow_drift(model, sde), sde.t_min, 1.0, x, rtol=tol, atol=tol)
    return y1
