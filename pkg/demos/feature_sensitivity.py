"""Sweep centroid count, segment length and ridge strength for the shape-feature LR.

    python demos/feature_sensitivity.py desk_out

Reuses the split and saliency maps of a finished run; each (K, L) cell
re-clusters and re-extracts features. Same as ``ecgxai sensitivity``.
"""

import csv
import sys
from pathlib import Path

from ecgxai import pipeline
from ecgxai.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "desk_out")
    cfg = load_config(ROOT / "configs" / "desk.json")
    summary = pipeline.run_stage("sensitivity", cfg, out, K_grid=[8, 16, 32], L_grid=[1.0, 2.0])
    with open(out / "sensitivity/sensitivity.csv") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'K':>3s} {'L':>4s} {'lambda':>7s} {'AUROC':>6s} {'3MCS':>6s}")
    for r in rows:
        print(f"{r['K']:>3s} {float(r['L_seconds']):4.1f} {float(r['lambda']):7.2f} "
              f"{float(r['auroc']):6.3f} {float(r['3mcs']):6.3f}")
    print("best:", summary["best"])


if __name__ == "__main__":
    main()
