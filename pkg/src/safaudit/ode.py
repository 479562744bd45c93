"""Dormand-Prince 5(4) integrator with independent step control per row.

Each row of the state is its own initial value problem: it keeps its own
time and step size, so the trajectory of one row never depends on which
other rows share the batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StiffnessError

# Butcher tableau (Hairer, Norsett & Wanner, p. 178)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW


@dataclass
class OdeStats:
    nfev: int = 0
    accepted: int = 0
    rejected: int = 0


def _rms(a):
    return np.sqrt(np.mean(a * a, axis=1))


def dopri5(fun, t0: float, t1: float, y0, rtol: float = 1e-5, atol: float = 1e-5,
           max_steps: int = 100_000):
    """Integrate ``dy/dt = fun(t, y)`` from ``t0`` to ``t1`` row by row.

    ``fun`` receives a vector of per-row times and an ``(n, k)`` state block.
    Returns ``(y1, stats)``.
    """
    y = np.array(y0, dtype=float, copy=True)
    n = y.shape[0]
    stats = OdeStats()
    span = t1 - t0
    if n == 0 or span == 0:
        return y, stats
    direction = np.sign(span)
    t = np.full(n, float(t0))
    k1 = fun(t, y)
    stats.nfev += 1

    scale = atol + rtol * np.abs(y)
    d0, d1 = _rms(y / scale), _rms(k1 / scale)
    h = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h = np.minimum(h, abs(span))
    active = np.ones(n, dtype=bool)

    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return y, stats
        ti, yi = t[idx], y[idx]
        remaining = np.abs(t1 - ti)
        last = h[idx] >= remaining
        hh = direction * np.where(last, remaining, h[idx])
        ks = [k1[idx]]
        for s in range(1, 7):
            ys = yi + hh[:, None] * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
            ks.append(fun(ti + _C[s] * hh, ys))
            stats.nfev += 1
        y_new = yi + hh[:, None] * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
        err = hh[:, None] * sum(e * k for e, k in zip(_E, ks))
        sc = atol + rtol * np.maximum(np.abs(yi), np.abs(y_new))
        err_norm = _rms(err / sc)
        ok = np.isfinite(err_norm) & (err_norm <= 1.0)

        acc = idx[ok]
        y[acc] = y_new[ok]
        t[acc] = np.where(last[ok], t1, ti[ok] + hh[ok])
        k1[acc] = ks[6][ok]
        stats.accepted += int(ok.sum())
        stats.rejected += int((~ok).sum())

        with np.errstate(divide="ignore"):
            factor = np.where(err_norm == 0, 10.0, 0.9 * err_norm ** -0.2)
        factor = np.where(np.isfinite(factor), factor, 0.2)
        factor = np.clip(factor, 0.2, 10.0)
        factor = np.where(ok, factor, np.minimum(factor, 0.5))
        h[idx] = np.abs(hh) * factor
        active[acc[last[ok]]] = False

        tiny = h[idx] <= 1e-14 * np.maximum(1.0, np.abs(ti))
        if np.any(tiny & ~ok):
            bad = ti[tiny & ~ok][0]
            raise StiffnessError(f"step size underflow at t={bad:.6g}", t=float(bad))
    raise StiffnessError(f"exceeded {max_steps} steps", t=float(t[active][0]))
