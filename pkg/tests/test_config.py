import json

import pytest

from ecgxai.config import DEFAULTS, config_hash, load_config, resolve
from ecgxai.exceptions import ConfigError


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("")
    assert load_config(path) == DEFAULTS
    assert load_config(None) == DEFAULTS


def test_defaults_grid():
    cnn = DEFAULTS["cnn"]
    assert (cnn["filters"], cnn["kernel"], cnn["deepness"]) == ([8, 16, 32], [3, 5, 9], [2, 3, 4])
    assert DEFAULTS["kshape"]["K"] == 32


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="cnn.bogus"):
        resolve({"cnn": {"bogus": 1}})
    with pytest.raises(ConfigError, match="nosuch"):
        resolve({"nosuch": {}})


def test_type_mismatch_is_named():
    with pytest.raises(ConfigError, match="kshape.K"):
        resolve({"kshape": {"K": "32"}})
    with pytest.raises(ConfigError, match="cnn.filters"):
        resolve({"cnn": {"filters": [8.5]}})
    with pytest.raises(ConfigError, match="cnn.resample"):
        resolve({"cnn": {"resample": 1}})


def test_int_accepted_for_float():
    cfg = resolve({"kshape": {"L_seconds": 1}})
    assert cfg["kshape"]["L_seconds"] == 1.0 and isinstance(cfg["kshape"]["L_seconds"], float)


def test_nullable_keys():
    cfg = resolve({"data": {"path": "x"}, "cnn": {"grid_folds": [0, 1]}})
    assert cfg["data"]["path"] == "x" and cfg["cnn"]["grid_folds"] == [0, 1]


def test_empty_grid_rejected():
    with pytest.raises(ConfigError):
        resolve({"cnn": {"kernel": []}})


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_hash_stable_and_sensitive(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seeds": {"data": 3}}))
    a, b = load_config(path), load_config(path)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(DEFAULTS)


def test_unpool_fill_choices():
    assert resolve({"saliency": {"unpool_fill": "interp"}})["saliency"]["unpool_fill"] == "interp"
    with pytest.raises(ConfigError, match="saliency.unpool_fill"):
        resolve({"saliency": {"unpool_fill": "nearest"}})
