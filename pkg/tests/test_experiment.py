import csv
import hashlib
import json

import numpy as np
import pytest

from safaudit.config import config_from_dict
from safaudit.errors import ConfigError, NumericError
from safaudit.experiment import pool_features, run_experiment, run_sweep

SMALL = {"audit": {"n_samples": 64, "grid_step": 0.1, "M": 8, "n_test": 64},
         "sampler": {"steps": 200, "chunk": 32},
         "classifiers": {"n_train": 800, "n_val": 800}}


def small(**over):
    doc = json.loads(json.dumps(SMALL))
    for k, v in over.items():
        doc.setdefault(k, {}).update(v) if isinstance(v, dict) else doc.__setitem__(k, v)
    return config_from_dict(doc)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return out, run_experiment(small(), out)


def test_artifacts_and_manifest(run):
    out, _ = run
    names = {p.name for p in out.iterdir()}
    assert {"data.csv", "data.csv.json", "saf.csv", "saf.csv.json", "model.json", "c_p.json", "c_id.json",
            "curve.csv", "curve.svg", "report.json", "manifest.json"} <= names
    man = json.loads((out / "manifest.json").read_text())
    listed = set(man["files"])
    assert listed == names - {"manifest.json"}
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert man["seeds"]["master"] == 0


def test_report_contents(run):
    out, rep = run
    doc = json.loads((out / "report.json").read_text())
    c = doc["census"]
    assert c["count_q"] <= min(c["count_cp"], c["count_cid"])
    assert 0 <= c["p_value"] <= 1
    assert doc["t_prime"] in doc["q_curve"]["t"] or doc["t_prime"] == 0.0
    assert doc["darboux"]["upper"] >= doc["darboux"]["riemann"]
    assert doc["config"]["audit"]["M"] == 8 and "threads" not in doc["config"]
    assert doc["mae"]["min"] < 1e-2
    assert "timestamp" not in json.dumps(doc)


def test_same_config_same_report(run, tmp_path):
    out, _ = run
    cfg = small(threads=4)
    run_experiment(cfg, tmp_path)
    assert (tmp_path / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_mlp_pipeline(tmp_path):
    cfg = small(model={"kind": "Mlp", "width": 16, "train": {"steps": 20}})
    rep = run_experiment(cfg, tmp_path)
    assert "final_dsm_loss" in rep.extra and np.isfinite(rep.extra["final_dsm_loss"])
    rep.check_invariants()


def test_stage_tagged_error_keeps_partial_artifacts(tmp_path):
    cfg = small(classifiers={"saf_min_accuracy": 1.01})
    with pytest.raises(NumericError, match=r"^\[classifiers\]"):
        run_experiment(cfg, tmp_path)
    assert (tmp_path / "saf.csv").exists() and (tmp_path / "model.json").exists()
    assert not (tmp_path / "report.json").exists()


def test_stage_tag_on_config_error(tmp_path):
    cfg = small(fingerprint={"radius": 3.5})
    with pytest.raises(ConfigError, match=r"^\[saf\]"):
        run_experiment(cfg, tmp_path)
    assert (tmp_path / "data.csv").exists()


def test_sweep_writes_table(tmp_path):
    cfg = small(sweep_n=[8, 16])
    rows = run_sweep(cfg, tmp_path)
    assert [r["N_D"] for r in rows] == [8, 16]
    with open(tmp_path / "table1.csv") as f:
        table = list(csv.DictReader(f))
    assert list(table[0]) == ["N_D", "expected_q", "count_cp", "count_cid", "count_q", "p_value", "t_prime"]
    assert float(table[1]["expected_q"]) == 64 / 16
    assert (tmp_path / "N_8" / "report.json").exists() and (tmp_path / "N_16" / "report.json").exists()


def test_pool_features():
    x = np.arange(16.0).reshape(1, 16)
    p = pool_features(x, (4, 4), 2)
    assert p.tolist() == [[2.5, 4.5, 10.5, 12.5]]
    assert pool_features(x, None, 2) is not None and pool_features(x, None, 2).shape == (1, 16)
