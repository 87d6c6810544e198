"""Pipeline configuration: JSON file with fixed sections, defaults for every key.

An empty file (or none) gives the full defaults. Unknown sections or keys and
values of the wrong type are rejected with an error naming the key.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .exceptions import ConfigError

ROAR_FRACTIONS = [round(0.1 * i, 1) for i in range(10)]

DEFAULTS: dict = {
    "data": {
        "path": None,            # existing dataset (bundle file or csv_dir); None -> synthesize
        "format": None,
        "n_instances": 400,
        "pathology": "slow_rate",
        "positive_fraction": 0.25,
        "n_leads": 2,
        "sample_rate_hz": 200.0,
        "duration_s": 10.0,
        "n_folds": 5,
        "test_fraction": 0.2,
        "lr_test_fraction": 0.2,
    },
    "synth": {
        "powerline_hz": 50.0,
        "powerline_amp": 40.0,
        "wander_hz": 0.15,
        "wander_amp": 80.0,
        "white_sigma": 15.0,
    },
    "cnn": {
        "filters": [8, 16, 32],
        "kernel": [3, 5, 9],
        "deepness": [2, 3, 4],
        "grid_folds": None,      # folds evaluated in the grid; None -> all
        "final_fold": 0,
        "lr0": 1e-3,
        "decay": 1e-7,
        "max_epochs": 10000,
        "patience": 5,
        "batch_size": 32,
        "min_delta": 1e-6,
        "proj_iters": 4,
        "resample": True,
        "zero_head": True,
    },
    "saliency": {
        "roar_fractions": ROAR_FRACTIONS,
        "unpool_fill": "zero",   # "zero" or "interp"
    },
    "kshape": {
        "K": 32,
        "L_seconds": 2.0,
        "max_iter": 100,
    },
    "lr": {
        "lambda": [0.01, 0.1, 1.0, 10.0],
        "cv_folds": 5,
        "resample": True,
        "importance_repeats": 10,
        "alpha": 0.05,
        "n_tests": 5,
    },
    "seeds": {
        "data": 0,
        "split": 0,
        "cnn": 0,
        "resample": 0,
        "kshape": 0,
        "lr": 0,
        "roar": 0,
        "importance": 0,
    },
}

# keys whose default is None and the type they accept otherwise
_NULLABLE = {("data", "path"): str, ("data", "format"): str, ("cnn", "grid_folds"): list}


def _type_ok(value, default, nullable_type=None) -> bool:
    if value is None:
        return nullable_type is not None or default is None
    if nullable_type is not None:
        return isinstance(value, nullable_type)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, list):
        if not isinstance(value, list):
            return False
        proto = default[0] if default else None
        return proto is None or all(_type_ok(v, proto) for v in value)
    return isinstance(value, type(default))


def resolve(user: dict | None) -> dict:
    """Merge ``user`` over the defaults, validating section and key names and types."""
    cfg = copy.deepcopy(DEFAULTS)
    user = user or {}
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    for section, body in user.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section '{section}'")
        if not isinstance(body, dict):
            raise ConfigError(f"config section '{section}' must be an object")
        for key, value in body.items():
            name = f"{section}.{key}"
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown config key '{name}'")
            if not _type_ok(value, DEFAULTS[section][key], _NULLABLE.get((section, key))):
                raise ConfigError(f"config key '{name}' has wrong type {type(value).__name__}")
            if isinstance(DEFAULTS[section][key], float) and value is not None:
                value = float(value)
            cfg[section][key] = value
    _check_values(cfg)
    return cfg


def _check_values(cfg: dict) -> None:
    for key in ("filters", "kernel", "deepness"):
        if not cfg["cnn"][key]:
            raise ConfigError(f"config key 'cnn.{key}' must not be empty")
    if cfg["kshape"]["K"] < 1:
        raise ConfigError("config key 'kshape.K' must be positive")
    if cfg["kshape"]["L_seconds"] <= 0:
        raise ConfigError("config key 'kshape.L_seconds' must be positive")
    if cfg["saliency"]["unpool_fill"] not in ("zero", "interp"):
        raise ConfigError("config key 'saliency.unpool_fill' must be 'zero' or 'interp'")
    if not cfg["lr"]["lambda"]:
        raise ConfigError("config key 'lr.lambda' must not be empty")


def load_config(path=None) -> dict:
    if path is None:
        return resolve({})
    text = Path(path).read_text()
    if not text.strip():
        return resolve({})
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return resolve(user)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
