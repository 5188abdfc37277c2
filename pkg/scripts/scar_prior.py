"""Class-prior error of the SCAR learner on Breast Cancer across label frequencies."""
import argparse

from sarpu.eval import cross_validate, mean_sd
from sarpu.pu_data import SCARLabeling, load_breast_cancer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    args = ap.parse_args()
    ds = load_breast_cancer()
    print("c      |prior error| mean  sd      F1")
    for c in args.c:
        report = cross_validate(ds, SCARLabeling(c), "scar")
        m, sd = report.summary("abs_prior_error")
        f1, _ = mean_sd(cell.f1 for cell in report.per_fold)
        print(f"{c:<6} {m:.4f}             {sd:.4f}  {f1:.4f}")


if __name__ == "__main__":
    main()
