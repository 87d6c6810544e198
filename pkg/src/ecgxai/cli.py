"""Command line entry point: one subcommand per pipeline stage, plus ``all``.

Every command takes ``--config`` (JSON, see :mod:`ecgxai.config`),
``--out-dir`` (default: ``$ECGXAI_DATA_DIR`` or ``./data``) and ``--seed``
(overrides every seed in the config). On success a JSON summary is printed
on stdout; on failure a single JSON line ``{"error": ..., "stage": ...,
"message": ...}`` goes to stderr and the exit code is 1.

Stage-specific overrides::

    synth        --n-instances N --pathology NAME --data-path PATH --data-format FMT
    grid-search  --filters 8 16 --kernel 3 5 --deepness 2 3
    train-cnn    --filters/--kernel/--deepness, --max-epochs N
    kshape       --K N --L-seconds S
    fit-lr       --lambda 0.1 1
    sensitivity  --K-grid 8 16 32 --L-grid 1 2 (with --lambda as the ridge grid)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import pipeline
from .config import load_config, resolve
from .signal.io import default_data_dir

COMMANDS = pipeline.STAGES + ["sensitivity", "all"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecgxai", description="Explainable ECG classification pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file (empty or absent: defaults)")
        sp.add_argument("--out-dir", default=None, help="artifact directory")
        sp.add_argument("--seed", type=int, default=None, help="override every seed")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("synth", "all"):
            sp.add_argument("--n-instances", type=int)
            sp.add_argument("--pathology")
            sp.add_argument("--data-path")
            sp.add_argument("--data-format", choices=["bundle", "csv_dir"])
        if name in ("grid-search", "train-cnn", "all"):
            sp.add_argument("--filters", type=int, nargs="+")
            sp.add_argument("--kernel", type=int, nargs="+")
            sp.add_argument("--deepness", type=int, nargs="+")
            sp.add_argument("--max-epochs", type=int)
        if name in ("kshape", "all"):
            sp.add_argument("--K", type=int)
            sp.add_argument("--L-seconds", type=float)
        if name in ("fit-lr", "sensitivity", "all"):
            sp.add_argument("--lambda", dest="lam", type=float, nargs="+")
        if name == "sensitivity":
            sp.add_argument("--K-grid", type=int, nargs="+")
            sp.add_argument("--L-grid", type=float, nargs="+")
    return p


_OVERRIDES = {
    "n_instances": ("data", "n_instances"),
    "pathology": ("data", "pathology"),
    "data_path": ("data", "path"),
    "data_format": ("data", "format"),
    "filters": ("cnn", "filters"),
    "kernel": ("cnn", "kernel"),
    "deepness": ("cnn", "deepness"),
    "max_epochs": ("cnn", "max_epochs"),
    "K": ("kshape", "K"),
    "L_seconds": ("kshape", "L_seconds"),
    "lam": ("lr", "lambda"),
}


def build_config(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config)
    user = {}
    for attr, (section, key) in _OVERRIDES.items():
        value = getattr(args, attr, None)
        if value is not None:
            user.setdefault(section, {})[key] = value
    if args.seed is not None:
        user["seeds"] = {k: args.seed for k in cfg["seeds"]}
    if user:
        merged = {s: {**cfg[s], **user.get(s, {})} for s in cfg}
        cfg = resolve(merged)
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        cfg = build_config(args)
        out = args.out_dir or default_data_dir()
        if stage == "all":
            result = pipeline.run_all(cfg, out)
        elif stage == "sensitivity":
            result = pipeline.run_stage(stage, cfg, out, K_grid=args.K_grid, L_grid=args.L_grid)
        else:
            result = pipeline.run_stage(stage, cfg, out)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parseable line
        msg = " ".join(str(exc).split())
        print(json.dumps({"error": type(exc).__name__, "stage": stage, "message": msg}),
              file=sys.stderr)
        return 1
    print(json.dumps({"stage": stage, "result": _jsonable(result)}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
