"""End-to-end audit pipeline and the dataset-size sweep.

Every stage draws from its own keyed stream of the master seed, so stages
can be rerun in isolation (see ``cli``) and the thread count never changes
a result.
"""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .audit import (AuditReport, census, darboux_bound, find_t_prime, frechet_gaussian_distance,
                    mae_to_target, riemann_dt, table1_rows)
from .checkpoint import save_checkpoint
from .classifier import train_id_classifier, train_saf_classifier
from .config import ExperimentConfig
from .data import Dataset, gen_toy_dataset, load_dataset, save_dataset
from .errors import AuditError, ConfigError
from .fingerprint import SafDataset, build_saf_dataset, fingerprint_from_sidecar, make_fingerprint
from .plot import emit_plot
from .score import EmpiricalOracle, MlpScore, train_score

log = logging.getLogger(__name__)

STAGES = ("data", "saf", "fit", "classifiers", "census", "tprime", "darboux", "distances", "mae")


@contextlib.contextmanager
def stage(name: str):
    """Re-raise package errors with the stage name prefixed, keeping the error type."""
    try:
        yield
    except AuditError as e:
        if str(e).startswith("["):
            raise
        err = type(e).__new__(type(e))
        err.args = (f"[{name}] {e}",)
        err.__dict__.update(e.__dict__)
        raise err from e


def _json_dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---- individual stages -------------------------------------------------------------------

def make_data(cfg: ExperimentConfig, n: int | None = None, stage_name: str = "data") -> Dataset:
    spec = cfg.data if n is None else dataclasses.replace(cfg.data, n=n)
    ds = gen_toy_dataset(spec, rngmod.stream(cfg.seed, stage_name))
    ds.meta["seed"] = cfg.seed
    return ds


def make_saf(cfg: ExperimentConfig, base: Dataset) -> SafDataset:
    fp = cfg.fingerprint
    spec = make_fingerprint(base.dim, cfg.geometry(), rngmod.stream(cfg.seed, "saf"), base.n,
                            fp.gray, fp.host_index)
    return build_saf_dataset(base, spec)


def save_saf(saf: SafDataset, path) -> Path:
    return save_dataset(saf.data, path, **saf.sidecar())


def load_saf(path) -> SafDataset:
    ds, meta = load_dataset(path)
    if "fingerprint" not in meta:
        raise ConfigError(f"{path}: sidecar has no fingerprint record")
    spec = fingerprint_from_sidecar(meta, ds.dim)
    row = int(meta["saf_row"])
    return SafDataset(ds, row, ds.values[row].copy(), np.asarray(meta["original_x_i"], dtype=float), spec)


def fit_model(cfg: ExperimentConfig, data: Dataset):
    m = cfg.model
    if m.kind == "Oracle":
        return EmpiricalOracle(data.values, cfg.sde, m.tau)
    train = dataclasses.replace(m.train, seed=rngmod.child_seed(cfg.seed, "fit", m.train.seed))
    init = MlpScore.init(data.dim, cfg.sde, m.width, seed=train.seed)
    return train_score(init, data, cfg.sde, train)


def fit_classifiers(cfg: ExperimentConfig, saf: SafDataset):
    c = cfg.classifiers
    c_p = train_saf_classifier(saf, cfg.saf_augmentation(), c.train,
                               rngmod.stream(cfg.seed, "saf_classifier", c.train.seed),
                               c.threshold, c.n_train, c.n_val, c.saf_min_accuracy)
    c_id = train_id_classifier(saf, cfg.id_augmentation(), c.train,
                               rngmod.stream(cfg.seed, "id_classifier", c.train.seed),
                               c.threshold, 2 * c.n_train, c.n_val, c.id_min_accuracy)
    return c_p, c_id


def audit_seed(cfg: ExperimentConfig) -> int:
    return rngmod.child_seed(cfg.seed, "audit", cfg.sampler.seed)


def pool_features(x, grid, k: int):
    """Average-pool image rows over ``k x k`` blocks (flat vectors are returned as is)."""
    x = np.atleast_2d(x)
    if grid is None or k <= 1:
        return x
    h, w = grid
    hh, ww = h // k, w // k
    img = x.reshape(-1, h, w)[:, :hh * k, :ww * k]
    return img.reshape(-1, hh, k, ww, k).mean(axis=(2, 4)).reshape(x.shape[0], -1)


def _fd_or_none(a, b):
    if min(a.shape[0], b.shape[0]) < a.shape[1] + 1:
        return None
    return frechet_gaussian_distance(a, b)


# ---- pipeline ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir, write: bool = True) -> AuditReport:
    """Run every stage and write artifacts to ``out_dir``.

    On failure the artifacts of completed stages stay on disk and the error
    message names the failing stage.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = {"master": cfg.seed}

    with stage("data"):
        base = make_data(cfg)
        save_dataset(base, out / "data.csv", seed=cfg.seed)
    with stage("saf"):
        saf = make_saf(cfg, base)
        save_saf(saf, out / "saf.csv")
    with stage("fit"):
        model = fit_model(cfg, saf.data)
        save_checkpoint(model, out / "model.json")
    with stage("classifiers"):
        c_p, c_id = fit_classifiers(cfg, saf)
        save_checkpoint(c_p, out / "c_p.json")
        save_checkpoint(c_id, out / "c_id.json")

    a = cfg.audit
    seed = audit_seed(cfg)
    seeds["audit"] = seed
    with stage("census"):
        rec, samples, qmask = census(model, cfg.sde, c_p, c_id, a.n_samples, saf.data.n,
                                     cfg.sampler, seed, cfg.threads)
    with stage("tprime"):
        t_prime, curve = find_t_prime(model, cfg.sde, c_p, c_id, saf.x_p, cfg.grid(), a.M,
                                      cfg.sampler, seed, cfg.threads, a.search)
        (out / "curve.csv").write_text(curve.to_csv())
        emit_plot(curve, t_prime, out / "curve.svg", title=f"N={saf.data.n}")
    with stage("darboux"):
        riem, upper = darboux_bound(curve, cfg.sde)
        rdt = riemann_dt(curve)
    with stage("distances"):
        test = make_data(cfg, max(a.n_test, 2), stage_name="data_test")
        fs = pool_features(samples, saf.data.grid, a.fd_pool)
        fd_train = _fd_or_none(fs, pool_features(saf.data.values, saf.data.grid, a.fd_pool)) \
            if len(fs) else None
        fd_test = _fd_or_none(fs, pool_features(test.values, test.grid, a.fd_pool)) if len(fs) else None
    with stage("mae"):
        mae = mae_to_target(samples[qmask], saf.x_p) if qmask.any() else None

    lo, hi = curve.wilson()
    i = int(np.argmin(np.abs(curve.grid - t_prime)))
    report = AuditReport(t_prime, (float(lo[i]), float(hi[i])), curve, riem, upper, rdt, rec,
                         fd_train, fd_test, mae)
    report.check_invariants()
    report.extra = {
        "config": _provenance_config(cfg),
        "dataset_hash": saf.data.content_hash(),
        "saf_hash": saf.content_hash(),
        "classifiers": {"c_p_val_accuracy": c_p.validation_accuracy,
                        "c_id_val_accuracy": c_id.validation_accuracy},
        "seeds": seeds,
    }
    if isinstance(model, MlpScore) and model.loss_history:
        report.extra["final_dsm_loss"] = float(np.mean(model.loss_history[-50:]))
    if write:
        _json_dump(report.to_dict(), out / "report.json")
        write_manifest(out, seeds)
    return report


def _provenance_config(cfg: ExperimentConfig) -> dict:
    # the thread count is an execution detail that must not change the report
    d = cfg.to_dict()
    d.pop("threads")
    return d


def write_manifest(out_dir, seeds: dict) -> Path:
    out = Path(out_dir)
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    doc = {"files": files, "seeds": seeds, "streams": {s: rngmod.stage_key(s) for s in
                                                        ("data", "data_test", "saf", "fit", "mlp_init",
                                                         "train_score", "saf_classifier",
                                                         "id_classifier", "audit", "qhat", "census")}}
    path = out / "manifest.json"
    _json_dump(doc, path)
    return path


def run_sweep(cfg: ExperimentConfig, out_dir) -> list[dict]:
    """One full run per dataset size in ``cfg.sweep_n`` plus a combined ``table1.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in cfg.sweep_n:
        sub = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, n=int(n)))
        log.info("sweep: N=%d", n)
        rep = run_experiment(sub, out / f"N_{int(n)}")
        row = table1_rows([rep.census])[0]
        row["t_prime"] = rep.t_prime
        rows.append(row)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["N_D", "expected_q", "count_cp", "count_cid", "count_q",
                                        "p_value", "t_prime"], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (out / "table1.csv").write_text(buf.getvalue())
    write_manifest(out, {"master": cfg.seed})
    return rows

