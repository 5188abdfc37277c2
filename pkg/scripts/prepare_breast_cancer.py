"""Build the bundled Breast Cancer CSV from the original Wisconsin biopsy table.

Source: the MASS ``biopsy`` table (699 rows, nine cytology scores on a 1-10
scale, 16 rows with a missing ``V6``). Incomplete rows are dropped, leaving 683.
Scores are rescaled to [0, 1] via (v - 1) / 9 and ``malignant`` becomes y=1.

Usage:
    python scripts/prepare_breast_cancer.py path/to/biopsy.csv
"""
import csv
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "sarpu" / "data" / "breast_cancer.csv"
FEATURES = ["V1", "V2", "V3", "V4", "V5", "V6", "V7", "V8", "V9"]


def main(src):
    rows = []
    with open(src, newline="") as fh:
        for rec in csv.DictReader(fh):
            if any(rec[f] == "NA" for f in FEATURES):
                continue
            feats = [(float(rec[f]) - 1.0) / 9.0 for f in FEATURES]
            rows.append(feats + [1 if rec["class"] == "malignant" else 0])
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURES + ["y"])
        for r in rows:
            w.writerow([repr(round(v, 6)) if isinstance(v, float) else v for v in r])
    print(f"wrote {len(rows)} rows to {OUT}")


if __name__ == "__main__":
    main(sys.argv[1])
