"""Reverse-time samplers and the renoise/denoise round trip."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SamplingError
from .ode import dopri5
from .sde import SdeSpec, diffusion, drift_coefficient, drift_diffusion, marginal_params, prior_sample


@dataclass
class SamplerConfig:
    method: str = "ReverseSde"
    steps: int = 1000
    rel_tol: float = 1e-5
    abs_tol: float = 1e-5
    t_start: float = 1.0
    seed: int = 0
    chunk: int = 256

    def validate(self):
        if self.method not in ("ReverseSde", "FlowOde"):
            raise ConfigError(f"unknown sampler method {self.method!r}")
        if self.steps < 1 or self.chunk < 1:
            raise ConfigError("steps and chunk must be >= 1")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if not 0.0 < self.t_start <= 1.0:
            raise ConfigError("t_start must lie in (0, 1]")


def n_steps_for(cfg: SamplerConfig, sde: SdeSpec, t0: float) -> int:
    """Steps used from ``t0`` down to the end time: the proportional share of ``cfg.steps``."""
    return int(round(cfg.steps * max(t0 - sde.t_min, 0.0)))


def _euler_maruyama(model, sde, x, t0, cfg, rng, strict=True):
    x = np.array(x, dtype=float, copy=True)
    failed = np.zeros(x.shape[0], dtype=bool)
    k = n_steps_for(cfg, sde, t0)
    if k == 0:
        return x, failed
    grid = np.linspace(t0, sde.t_min, k + 1)
    a = np.asarray(drift_coefficient(sde, grid[:-1]))
    g = np.asarray(diffusion(sde, grid[:-1]))
    dts = grid[:-1] - grid[1:]
    for i in range(k):
        t, dt = grid[i], dts[i]
        drift = a[i] * x - g[i] ** 2 * model.score(x, t)
        x = x - drift * dt + g[i] * np.sqrt(dt) * rng.standard_normal(x.shape)
        if not np.isfinite(x).all():
            if strict:
                raise SamplingError(f"non-finite state at reverse step {i + 1}/{k} (t={t:.4g})")
            bad = ~np.all(np.isfinite(x), axis=1)
            failed |= bad
            x[bad] = 0.0
    return x, failed


def reverse_sde_sample(model, sde: SdeSpec, cfg: SamplerConfig, rng: np.random.Generator,
                       init=None, n: int = 1, return_failed: bool = False):
    """Euler-Maruyama on the reverse SDE ``dx = [f - g^2 s] dt + g dw``.

    Without ``init`` the chain starts from the prior at ``cfg.t_start``;
    ``init=(t0, x0)`` starts from ``x0`` (a vector or a batch) at ``t0``.
    With ``return_failed`` diverging rows are flagged instead of raising.
    """
    if init is None:
        t0 = cfg.t_start
        x0 = prior_sample(sde, n, model.dim, rng)
        single = False
    else:
        t0, x0 = init
        x0 = np.asarray(x0, dtype=float)
        single = x0.ndim == 1
        x0 = np.atleast_2d(x0)
        if not sde.t_min <= t0 <= 1.0 and t0 != 0.0:
            raise ConfigError(f"init time {t0} outside [0, 1]")
    x, failed = _euler_maruyama(model, sde, x0, t0, cfg, rng, strict=not return_failed)
    if single:
        x, failed = x[0], failed[0]
    return (x, failed) if return_failed else x


def flow_drift(model, sde: SdeSpec):
    def fun(t, x):
        f, g = drift_diffusion(sde, x, t)
        g = np.asarray(g)
        if g.ndim == 1:
            g = g[:, None]
        return f - 0.5 * g * g * model.score(x, t)
    return fun


def flow_ode_sample(model, sde: SdeSpec, cfg: SamplerConfig, rng: np.random.Generator,
                    n: int = 1, z=None):
    """Integrate the probability-flow ODE from a prior draw at t=1 down to t=0.

    Pass ``z`` to reuse a specific prior draw.
    """
    if z is None:
        z = prior_sample(sde, n, model.dim, rng)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x, _ = dopri5(flow_drift(model, sde), 1.0, sde.t_min, z, rtol=cfg.rel_tol, atol=cfg.abs_tol)
    return x


def renoise_denoise(model, sde: SdeSpec, x_p, t: float, cfg: SamplerConfig,
                    rng: np.random.Generator, n: int = 1, return_failed: bool = False):
    """Noise ``x_p`` to level ``t`` with the forward kernel, then run the reverse SDE back."""
    x_p = np.asarray(x_p, dtype=float)
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"t must lie in [0, 1], got {t}")
    t_eff = max(t, sde.t_min)
    mp = marginal_params(sde, t_eff)
    x_tp = mp.mean_scale * x_p[None, :] + np.sqrt(mp.variance) * rng.standard_normal((n, x_p.size))
    return reverse_sde_sample(model, sde, cfg, rng, init=(t_eff, x_tp), return_failed=return_failed)


def map_chunks(fn, n_items: int, chunk: int, threads: int = 1) -> list:
    """Call ``fn(chunk_index, start, stop)`` over fixed-size chunks, results in chunk order.

    Chunk boundaries depend only on ``chunk``, never on ``threads``.
    """
    bounds = [(i, s, min(s + chunk, n_items)) for i, s in enumerate(range(0, n_items, chunk))]
    if threads <= 1 or len(bounds) <= 1:
        return [fn(*b) for b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
