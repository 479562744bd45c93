"""Command line entry point: ``safaudit <command> [--config C] [--seed S] [--out DIR] [--threads T]``.

Stage commands read and write files in ``--out`` (override inputs with the
per-command path flags), so a run can be scripted stage by stage::

    safaudit gen-data --out run
    safaudit inject-saf --out run
    safaudit fit --out run
    safaudit train-classifiers --out run
    safaudit census --out run
    safaudit tprime --out run

``report`` runs the whole pipeline and ``sweep`` repeats it over dataset sizes.
Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from . import rng as rngmod
from .audit import census, find_t_prime
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .data import load_dataset, save_dataset, write_matrix_csv
from .errors import AuditError, ConfigError
from .likelihood import exact_nll
from .plot import emit_plot
from .sampler import flow_ode_sample, map_chunks, reverse_sde_sample


def _path(args, name, default):
    p = getattr(args, name, None)
    return Path(p) if p else args.out / default


def cmd_gen_data(cfg, args):
    ds = ex.make_data(cfg)
    save_dataset(ds, args.out / "data.csv", seed=cfg.seed)
    return {"rows": ds.n, "dim": ds.dim, "hash": ds.content_hash()}


def cmd_inject_saf(cfg, args):
    base, _ = load_dataset(_path(args, "data", "data.csv"))
    saf = ex.make_saf(cfg, base)
    ex.save_saf(saf, args.out / "saf.csv")
    return {"saf_row": saf.saf_row, "mask_size": int(saf.spec.mask.sum()), "hash": saf.content_hash()}


def cmd_fit(cfg, args):
    ds, _ = load_dataset(_path(args, "data", "saf.csv"))
    model = ex.fit_model(cfg, ds)
    save_checkpoint(model, args.out / "model.json")
    return {"kind": type(model).__name__}


def cmd_train_classifiers(cfg, args):
    saf = ex.load_saf(_path(args, "data", "saf.csv"))
    c_p, c_id = ex.fit_classifiers(cfg, saf)
    save_checkpoint(c_p, args.out / "c_p.json")
    save_checkpoint(c_id, args.out / "c_id.json")
    return {"c_p_val_accuracy": c_p.validation_accuracy, "c_id_val_accuracy": c_id.validation_accuracy}


def _load_audit_inputs(cfg, args):
    model = load_checkpoint(_path(args, "model", "model.json"))
    c_p = load_checkpoint(args.out / "c_p.json")
    c_id = load_checkpoint(args.out / "c_id.json")
    return model, c_p, c_id


def cmd_sample(cfg, args):
    model = load_checkpoint(_path(args, "model", "model.json"))
    seed = ex.audit_seed(cfg)

    def run(chunk, start, stop):
        rng = rngmod.stream(seed, "sample", chunk)
        if cfg.sampler.method == "FlowOde":
            return flow_ode_sample(model, model.sde, cfg.sampler, rng, n=stop - start)
        return reverse_sde_sample(model, model.sde, cfg.sampler, rng, n=stop - start)

    x = np.concatenate(map_chunks(run, args.n, cfg.sampler.chunk, cfg.threads))
    write_matrix_csv(args.out / "samples.csv", x)
    return {"samples": int(x.shape[0]), "method": cfg.sampler.method}


def cmd_nll(cfg, args):
    model = load_checkpoint(_path(args, "model", "model.json"))
    ds, _ = load_dataset(_path(args, "data", "data.csv"))
    rng = rngmod.stream(cfg.seed, "nll")
    nll, bpd = exact_nll(model, model.sde, ds.values, args.div_mode, args.probes, args.tol, rng)
    lines = ["row,nll,bpd"] + [f"{i},{a!r},{b!r}" for i, (a, b) in enumerate(zip(nll.tolist(), bpd.tolist()))]
    (args.out / "nll.csv").write_text("\n".join(lines) + "\n")
    return {"mean_nll": float(np.mean(nll)), "mean_bpd": float(np.mean(bpd))}


def cmd_census(cfg, args):
    model, c_p, c_id = _load_audit_inputs(cfg, args)
    n_d = model.data.shape[0] if hasattr(model, "data") else cfg.data.n
    rec, _, _ = census(model, model.sde, c_p, c_id, cfg.audit.n_samples, n_d, cfg.sampler,
                       ex.audit_seed(cfg), cfg.threads)
    ex._json_dump(rec.to_dict(), args.out / "census.json")
    return rec.to_dict()


def cmd_tprime(cfg, args):
    model, c_p, c_id = _load_audit_inputs(cfg, args)
    saf = ex.load_saf(_path(args, "data", "saf.csv"))
    t_prime, curve = find_t_prime(model, model.sde, c_p, c_id, saf.x_p, cfg.grid(), cfg.audit.M,
                                  cfg.sampler, ex.audit_seed(cfg), cfg.threads, cfg.audit.search)
    (args.out / "curve.csv").write_text(curve.to_csv())
    emit_plot(curve, t_prime, args.out / "curve.svg")
    ex._json_dump({"t_prime": t_prime}, args.out / "tprime.json")
    return {"t_prime": t_prime}


def cmd_report(cfg, args):
    rep = ex.run_experiment(cfg, args.out)
    return {"t_prime": rep.t_prime, "count_q": rep.census.count_q, "p_value": rep.census.p_value,
            "darboux_upper": rep.darboux_upper}


def cmd_sweep(cfg, args):
    return {"rows": ex.run_sweep(cfg, args.out)}


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate the toy dataset"),
    "inject-saf": (cmd_inject_saf, "fingerprint one row of the dataset"),
    "fit": (cmd_fit, "build the oracle or train the MLP score model"),
    "train-classifiers": (cmd_train_classifiers, "train the fingerprint and identity classifiers"),
    "sample": (cmd_sample, "draw unconditional samples"),
    "nll": (cmd_nll, "exact negative log-likelihood of a dataset"),
    "census": (cmd_census, "count classifier positives among unconditional samples"),
    "tprime": (cmd_tprime, "estimate the hit-rate curve and t'"),
    "report": (cmd_report, "run the full pipeline"),
    "sweep": (cmd_sweep, "run the pipeline over several dataset sizes"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (every field optional)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", type=Path, default=Path("."), help="working/output directory")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="safaudit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name in ("inject-saf", "fit", "train-classifiers", "tprime", "nll"):
            sp.add_argument("--data", help="input dataset CSV")
        if name in ("sample", "nll", "census", "tprime"):
            sp.add_argument("--model", help="model checkpoint")
        if name == "sample":
            sp.add_argument("--n", type=int, default=16)
        if name == "nll":
            sp.add_argument("--div-mode", default="Analytic", choices=["Analytic", "Hutchinson"])
            sp.add_argument("--probes", type=int, default=1)
            sp.add_argument("--tol", type=float, default=1e-6)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.threads)
        if args.command == "sample" and args.n < 1:
            raise ConfigError("--n must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command][0](cfg, args)
    except AuditError as e:
        print(f"safaudit {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"safaudit {args.command}: I/O error: {e}", file=sys.stderr)
        return 4
    print(json.dumps(result, indent=2, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
