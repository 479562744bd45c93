"""Census and t' for the memorizing oracle across dataset sizes.

    python3 scripts/table1_dataset_size.py --out runs/table1 --sizes 16 64 256
"""
import argparse
import dataclasses
import logging
from pathlib import Path

from safaudit.config import load_config
from safaudit.experiment import run_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs/table1"))
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 64, 256])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=4)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = dataclasses.replace(load_config(args.config, args.seed, args.threads), sweep_n=args.sizes)
    rows = run_sweep(cfg.validate(), args.out)
    print(f"{'N_D':>6} {'E|q|':>8} {'|c_p+|':>7} {'|c_id+|':>8} {'|q|':>6} {'p':>10} {'t_prime':>8}")
    for r in rows:
        print(f"{r['N_D']:>6} {r['expected_q']:>8.1f} {r['count_cp']:>7} {r['count_cid']:>8} "
              f"{r['count_q']:>6} {r['p_value']:>10.3g} {r['t_prime']:>8.2f}")
    print(f"wrote {args.out / 'table1.csv'}")


if __name__ == "__main__":
    main()
