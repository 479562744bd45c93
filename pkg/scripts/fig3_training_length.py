"""Census and t' of an MLP score model as a function of training steps.

    python3 scripts/fig3_training_length.py --out runs/fig3 --steps 0 500 2000 8000
"""
import argparse
import csv
import dataclasses
import logging
from pathlib import Path

from safaudit.config import load_config
from safaudit.experiment import run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs/fig3"))
    p.add_argument("--steps", type=int, nargs="+", default=[0, 500, 2000, 8000])
    p.add_argument("--n", type=int, default=4, help="dataset size (small sets memorize sooner)")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=4)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = load_config(args.config, args.seed, args.threads)
    rows = []
    for steps in args.steps:
        model = dataclasses.replace(base.model, kind="Mlp", width=args.width,
                                    train=dataclasses.replace(base.model.train, steps=steps))
        cfg = dataclasses.replace(base, model=model, data=dataclasses.replace(base.data, n=args.n))
        rep = run_experiment(cfg.validate(), args.out / f"steps_{steps}")
        rows.append({"steps": steps, "final_dsm_loss": rep.extra.get("final_dsm_loss"),
                     "count_q": rep.census.count_q, "expected_q": rep.census.expected_q,
                     "t_prime": rep.t_prime, "darboux_upper": rep.darboux_upper,
                     "fd_train": rep.fd_train, "fd_test": rep.fd_test})
        print(rows[-1])
    with open(args.out / "training_length.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {args.out / 'training_length.csv'}")


if __name__ == "__main__":
    main()
