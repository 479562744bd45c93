"""Memorization audit: renoise/denoise hit rates, the t' indicator, the Darboux
bound, the sampling census and forensic distances.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from . import rng as rngmod
from .classifier import LinearClassifier, joint_positive, predict
from .errors import ConfigError
from .sampler import SamplerConfig, map_chunks, renoise_denoise, reverse_sde_sample
from .sde import SdeSpec, marginal_std


def wilson_interval(successes, trials, z: float = 1.96):
    """Wilson score interval for a binomial proportion (vectorised)."""
    k = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0)


@dataclass
class QEstimate:
    t: float
    value: float
    positives: int
    draws: int
    failures: int


@dataclass
class QCurve:
    grid: np.ndarray
    estimates: np.ndarray
    M: int
    seed: int
    positives: np.ndarray = None
    failures: np.ndarray = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.estimates = np.asarray(self.estimates, dtype=float)
        if self.positives is None:
            self.positives = np.rint(self.estimates * self.M).astype(int)
        if self.failures is None:
            self.failures = np.zeros(len(self.grid), dtype=int)
        if len(self.grid) == 0:
            raise ConfigError("empty q curve")
        if np.any(np.diff(self.grid) <= 0):
            raise ConfigError("q curve grid must be strictly increasing")

    def wilson(self, z: float = 1.96):
        return wilson_interval(self.positives, self.M, z)

    def to_dict(self) -> dict:
        lo, hi = self.wilson()
        return {"t": self.grid.tolist(), "q_hat": self.estimates.tolist(),
                "positives": [int(v) for v in self.positives],
                "failures": [int(v) for v in self.failures],
                "wilson_low": lo.tolist(), "wilson_high": hi.tolist(), "M": self.M, "seed": self.seed}

    def to_csv(self) -> str:
        lo, hi = self.wilson()
        lines = ["t,q_hat,wilson_low,wilson_high"]
        lines += [f"{t!r},{q!r},{a!r},{b!r}" for t, q, a, b in
                  zip(self.grid.tolist(), self.estimates.tolist(), lo.tolist(), hi.tolist())]
        return "\n".join(lines) + "\n"


def q_hat(model, sde: SdeSpec, c_p: LinearClassifier, c_id: LinearClassifier, x_p, t: float,
          M: int, sampler_cfg: SamplerConfig, seed: int, t_index: int = 0,
          threads: int = 1) -> QEstimate:
    """Fraction of ``M`` renoise/denoise round trips from ``x_p`` at level ``t``
    that land where both classifiers fire.

    Draws are grouped in fixed chunks with streams keyed by
    ``(seed, t_index, chunk)``. Diverging draws count as negatives.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")

    def run(chunk, start, stop):
        rng = rngmod.stream(seed, "qhat", t_index, chunk)
        x, failed = renoise_denoise(model, sde, x_p, t, sampler_cfg, rng, n=stop - start,
                                    return_failed=True)
        hit = joint_positive(c_p, c_id, x) & ~failed
        return int(hit.sum()), int(failed.sum())

    parts = map_chunks(run, M, sampler_cfg.chunk, threads)
    pos = sum(p for p, _ in parts)
    fails = sum(f for _, f in parts)
    return QEstimate(float(t), pos / M, pos, M, fails)


def find_t_prime(model, sde: SdeSpec, c_p, c_id, x_p, grid, M: int, sampler_cfg: SamplerConfig,
                 seed: int, threads: int = 1, mode: str = "exhaustive"):
    """Largest grid time whose hit rate is still positive (0 when none is).

    ``exhaustive`` evaluates every grid point from t=1 downwards and returns
    the full curve. ``bisection`` assumes the hit rate decreases in t and only
    evaluates the points a binary search visits.
    """
    grid = np.asarray(sorted(set(float(g) for g in grid)))
    if grid.size == 0 or grid[0] < 0 or grid[-1] > 1:
        raise ConfigError("grid must be a non-empty subset of [0, 1]")
    results: dict[int, QEstimate] = {}

    def evaluate(i):
        if i not in results:
            results[i] = q_hat(model, sde, c_p, c_id, x_p, grid[i], M, sampler_cfg, seed, i, threads)
        return results[i]

    if mode == "exhaustive":
        for i in range(len(grid) - 1, -1, -1):
            evaluate(i)
    elif mode == "bisection":
        lo, hi = -1, len(grid)  # invariant: q(lo) > 0 (or lo = -1), q(hi) == 0 (or hi = n)
        if evaluate(len(grid) - 1).value > 0:
            lo = len(grid) - 1
        else:
            hi = len(grid) - 1
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if evaluate(mid).value > 0:
                    lo = mid
                else:
                    hi = mid
    else:
        raise ConfigError(f"unknown search mode {mode!r}")

    idx = sorted(results)
    curve = QCurve(grid[idx], [results[i].value for i in idx], M, seed,
                   np.array([results[i].positives for i in idx]),
                   np.array([results[i].failures for i in idx]))
    hit = curve.grid[curve.estimates > 0]
    return (float(hit.max()) if hit.size else 0.0), curve


def darboux_bound(curve: QCurve, sde: SdeSpec):
    """Left Riemann sum and upper Darboux sum of the hit-rate curve in the
    marginal-std measure ``d sigma(t)``.

    The supremum over each cell is taken as the larger endpoint estimate.
    A single-point curve has no cells and integrates to zero.
    """
    t = np.asarray(curve.grid, dtype=float)
    q = np.asarray(curve.estimates, dtype=float)
    if t.size == 0:
        raise ConfigError("empty q curve")
    if np.any(np.diff(t) <= 0):
        raise ConfigError("q curve grid must be strictly increasing")
    dsig = np.diff(marginal_std(sde, t))
    riemann = float(np.sum(dsig * q[:-1]))
    upper = float(np.sum(dsig * np.maximum(q[:-1], q[1:])))
    return riemann, upper


def riemann_dt(curve: QCurve) -> float:
    """Plain left Riemann sum in ``dt``, for comparison with the sigma-weighted sums."""
    return float(np.sum(np.diff(curve.grid) * curve.estimates[:-1]))


def binomial_test(successes: int, trials: int, p0: float) -> float:
    """One-sided lower-tail exact binomial p-value ``P(X <= successes | p0)``."""
    if not 0 <= successes <= trials:
        raise ConfigError("need 0 <= successes <= trials")
    if not 0.0 < p0 < 1.0:
        raise ConfigError("p0 must lie in (0, 1)")
    if successes == trials:
        return 1.0
    j = np.arange(successes + 1, dtype=float)
    logpmf = (gammaln(trials + 1) - gammaln(j + 1) - gammaln(trials - j + 1)
              + j * math.log(p0) + (trials - j) * math.log1p(-p0))
    return float(min(1.0, math.exp(logsumexp(logpmf))))


def log_binomial_test(successes: int, trials: int, p0: float) -> float:
    """Natural log of :func:`binomial_test`, usable far below float underflow."""
    if successes == trials:
        return 0.0
    j = np.arange(successes + 1, dtype=float)
    logpmf = (gammaln(trials + 1) - gammaln(j + 1) - gammaln(trials - j + 1)
              + j * math.log(p0) + (trials - j) * math.log1p(-p0))
    return float(min(0.0, logsumexp(logpmf)))


@dataclass
class CensusRecord:
    n_samples: int
    N_D: int
    count_cp: int
    count_cid: int
    count_q: int
    expected_q: float
    p_value: float
    failures: int = 0

    def to_dict(self):
        return asdict(self)


def census_record(n_samples, N_D, count_cp, count_cid, count_q, failures=0) -> CensusRecord:
    """Assemble a census row; the null hypothesis is a hit rate of ``1/N_D``."""
    p0 = 1.0 / N_D
    p = binomial_test(count_q, n_samples, p0) if n_samples > 0 and 0 < p0 < 1 else 1.0
    return CensusRecord(int(n_samples), int(N_D), int(count_cp), int(count_cid), int(count_q),
                        n_samples / N_D, p, int(failures))


def census(model, sde: SdeSpec, c_p, c_id, n_samples: int, N_D: int, sampler_cfg: SamplerConfig,
           seed: int, threads: int = 1):
    """Draw unconditional samples and count classifier positives.

    Returns ``(record, samples, joint_mask)``.
    """
    if n_samples < 0 or N_D < 1:
        raise ConfigError("need n_samples >= 0 and N_D >= 1")
    if n_samples == 0:
        return census_record(0, N_D, 0, 0, 0), np.zeros((0, model.dim)), np.zeros(0, dtype=bool)

    def run(chunk, start, stop):
        rng = rngmod.stream(seed, "census", chunk)
        return reverse_sde_sample(model, sde, sampler_cfg, rng, n=stop - start, return_failed=True)

    parts = map_chunks(run, n_samples, sampler_cfg.chunk, threads)
    x = np.concatenate([p[0] for p in parts])
    failed = np.concatenate([p[1] for p in parts])
    cp = predict(c_p, x)[0] & ~failed
    cid = predict(c_id, x)[0] & ~failed
    q = cp & cid
    rec = census_record(n_samples, N_D, cp.sum(), cid.sum(), q.sum(), failed.sum())
    return rec, x, q


def table1_rows(records) -> list[dict]:
    """Rows shaped like the dataset-size table: ``N_D, E[|q|], |c_p+|, |c_id+|, |q|, p``."""
    return [{"N_D": r.N_D, "expected_q": r.expected_q, "count_cp": r.count_cp,
             "count_cid": r.count_cid, "count_q": r.count_q, "p_value": r.p_value}
            for r in records]


def _psd_sqrt(a):
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_from_moments(mu1, cov1, mu2, cov2) -> float:
    """Squared 2-Wasserstein distance between two Gaussians."""
    mu1, mu2 = np.atleast_1d(mu1).astype(float), np.atleast_1d(mu2).astype(float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    s1 = _psd_sqrt(cov1)
    inner = s1 @ cov2 @ s1
    ev = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2), 0, None)
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(cov1) + np.trace(cov2) - 2 * np.sum(np.sqrt(ev)))


def frechet_gaussian_distance(a, b, eps: float = 1e-6, full_output: bool = False):
    """Frechet distance between Gaussian fits of two sample matrices.

    If either covariance is singular, ``eps * I`` is added to both; with
    ``full_output`` the function returns ``(distance, regularized)``.
    """
    a, b = np.atleast_2d(a).astype(float), np.atleast_2d(b).astype(float)
    d = a.shape[1]
    if b.shape[1] != d:
        raise ConfigError("sample sets differ in dimension")
    if a.shape[0] < d + 1 or b.shape[0] < d + 1:
        raise ConfigError(f"need at least d+1={d + 1} rows per set")
    ca = np.atleast_2d(np.cov(a, rowvar=False))
    cb = np.atleast_2d(np.cov(b, rowvar=False))
    regularized = False
    for c in (ca, cb):
        w = np.linalg.eigvalsh(c)
        if w.min() <= 1e-12 * max(w.max(), 1.0):
            regularized = True
    if regularized:
        ca = ca + eps * np.eye(d)
        cb = cb + eps * np.eye(d)
    fd = max(0.0, frechet_from_moments(a.mean(0), ca, b.mean(0), cb))
    return (fd, regularized) if full_output else fd


def mae_to_target(samples, x_p) -> dict:
    """Per-sample mean absolute error to ``x_p``; returns its min and mean."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ConfigError("need at least one sample")
    mae = np.mean(np.abs(samples - np.asarray(x_p, dtype=float)), axis=1)
    # fsum is correctly rounded, so the mean does not depend on row order
    return {"min": float(mae.min()), "mean": math.fsum(mae) / len(mae)}


@dataclass
class AuditReport:
    t_prime: float
    t_prime_wilson: tuple
    q_curve: QCurve
    darboux_riemann: float
    darboux_upper: float
    riemann_dt: float
    census: CensusRecord
    fd_train: float | None
    fd_test: float | None
    mae_stats: dict | None
    extra: dict = field(default_factory=dict)

    def check_invariants(self):
        c = self.census
        problems = []
        if c.count_q > min(c.count_cp, c.count_cid):
            problems.append("count_q exceeds a single-classifier count")
        if not 0.0 <= c.p_value <= 1.0:
            problems.append("p_value outside [0, 1]")
        if self.t_prime != 0.0 and self.t_prime not in set(self.q_curve.grid.tolist()):
            problems.append("t_prime not on the grid")
        if self.darboux_upper < self.darboux_riemann:
            problems.append("upper Darboux sum below Riemann sum")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        return {"t_prime": self.t_prime, "t_prime_wilson": list(self.t_prime_wilson),
                "darboux": {"riemann": self.darboux_riemann, "upper": self.darboux_upper,
                            "riemann_dt": self.riemann_dt},
                "census": self.census.to_dict(), "fd_train": self.fd_train, "fd_test": self.fd_test,
                "mae": self.mae_stats, "q_curve": self.q_curve.to_dict(), **self.extra}
