"""F1 against the propensity gap of a one-attribute labeling mechanism.

Prints one line per (c_bar, delta_c, method), shaped for a line chart.
"""
import argparse

from sarpu.eval import cross_validate
from sarpu.pu_data import OneVarSAR, make_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--c-bar", type=float, nargs="+", default=[0.3, 0.5])
    ap.add_argument("--methods", nargs="+", default=["sar", "sar-e", "scar", "scar-c"])
    ap.add_argument("--fold-seeds", type=int, default=5)
    args = ap.parse_args()
    ds = make_synthetic(args.rows, 20, seed=args.seed)
    print("c_bar,delta_c,method,f1_mean,f1_sd")
    for c_bar in args.c_bar:
        for delta in (0.0, 0.2, 0.4, 0.6, 0.8):
            if c_bar - delta / 2 <= 0:
                continue
            for method in args.methods:
                report = cross_validate(ds, OneVarSAR(0, c_bar, delta), method,
                                        fold_seeds=range(args.fold_seeds))
                m, sd = report.summary("f1")
                print(f"{c_bar},{delta},{method},{m:.4f},{sd:.4f}", flush=True)


if __name__ == "__main__":
    main()
