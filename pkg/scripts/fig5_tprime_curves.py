"""Hit-rate curves q_M(t) and t' for memorizing and smoothed oracles over dataset sizes.

    python3 scripts/fig5_tprime_curves.py --out runs/fig5 --sizes 4 16 64 --taus 0 0.1 1
"""
import argparse
import logging
from pathlib import Path

from safaudit.audit import find_t_prime
from safaudit.config import load_config
from safaudit.experiment import audit_seed, fit_classifiers, make_data, make_saf
from safaudit.plot import emit_plot
from safaudit.score import EmpiricalOracle


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs/fig5"))
    p.add_argument("--sizes", type=int, nargs="+", default=[4, 16, 64])
    p.add_argument("--taus", type=float, nargs="+", default=[0.0, 0.1, 1.0])
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=4)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = load_config(args.config, args.seed, args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["N_D,tau,t_prime"]
    for n in args.sizes:
        base.data.n = n
        saf = make_saf(base, make_data(base))
        c_p, c_id = fit_classifiers(base, saf)
        for tau in args.taus:
            model = EmpiricalOracle(saf.data.values, base.sde, tau)
            t_prime, curve = find_t_prime(model, base.sde, c_p, c_id, saf.x_p, base.grid(), base.audit.M,
                                          base.sampler, audit_seed(base), base.threads, base.audit.search)
            stem = f"N{n}_tau{tau:g}"
            (args.out / f"{stem}.csv").write_text(curve.to_csv())
            emit_plot(curve, t_prime, args.out / f"{stem}.svg", title=f"N={n}, tau={tau:g}")
            lines.append(f"{n},{tau!r},{t_prime!r}")
            print(f"N={n:<4} tau={tau:<5g} t'={t_prime:.2f}")
    (args.out / "t_prime.csv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
