"""Run the whole pipeline on the desk-scale synthetic cohort and print the headline numbers.

    python demos/desk_pipeline.py [out_dir]

Takes about a minute and a half on one core.
"""

import csv
import sys
import time
from pathlib import Path

from ecgxai import pipeline
from ecgxai.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def read_metrics(path):
    with open(path) as fh:
        return {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("desk_out")
    cfg = load_config(ROOT / "configs" / "desk.json")
    t0 = time.perf_counter()
    for stage, summary in pipeline.run_all(cfg, out).items():
        print(f"{stage:12s} {summary}")
    print(f"\nfinished in {time.perf_counter() - t0:.0f} s; report in {out / 'report'}")

    cnn = read_metrics(out / "cnn/test_metrics.csv")
    lr = read_metrics(out / "lr/test_metrics.csv")
    print(f"\n{'metric':8s} {'CNN':>8s} {'LR':>8s}")
    for key in ("auroc", "auprc", "mcc", "3mcs"):
        print(f"{key:8s} {cnn[key]:8.3f} {lr[key]:8.3f}")


if __name__ == "__main__":
    main()
