import json

import pytest

from skilllab.config import (
    SEED_ENV_VAR, PolicyConfig, RunConfig, apply_overrides, build_section, config_hash, resolve_seed,
)
from skilllab.errors import ConfigError


def test_unknown_key_names_dotted_path():
    with pytest.raises(ConfigError, match="learn.stepz"):
        RunConfig.from_dict({"learn": {"stepz": 3}})


def test_partial_file_keeps_defaults(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 5, "policy": {"d_h": 32}}))
    cfg = RunConfig.load(str(path))
    assert cfg.seed == 5
    assert cfg.policy.d_h == 32
    assert cfg.policy.d_z == PolicyConfig().d_z


def test_to_dict_round_trip():
    cfg = RunConfig(seed=9)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(str(path))


def test_type_checks():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"learn": {"discrete_gate": 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"learn": {"lr": "fast"}})


def test_heads_must_divide_width():
    with pytest.raises(ConfigError, match="d_e"):
        build_section(PolicyConfig, {"d_e": 10, "n_heads": 4})


def test_negative_loss_weight():
    with pytest.raises(ConfigError, match="coop"):
        RunConfig.from_dict({"learn": {"weights": {"coop": -1.0}}})


def test_overrides():
    cfg = apply_overrides(RunConfig(), ["learn.steps=500", "policy.stream_obs=own"])
    assert cfg.learn.steps == 500
    assert cfg.policy.stream_obs == "own"
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["learn.nope=1"])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["learn.steps"])


def test_seed_precedence(monkeypatch):
    cfg = RunConfig(seed=1)
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    assert resolve_seed(cfg).seed == 1
    monkeypatch.setenv(SEED_ENV_VAR, "7")
    assert resolve_seed(cfg).seed == 7
    assert resolve_seed(cfg, cli_seed=3).seed == 3
    monkeypatch.setenv(SEED_ENV_VAR, "seven")
    with pytest.raises(ConfigError):
        resolve_seed(cfg)


def test_hash_is_stable_and_sensitive():
    assert config_hash(RunConfig()) == config_hash(RunConfig())
    assert config_hash(RunConfig()) != config_hash(RunConfig(seed=1))
    assert len(config_hash(RunConfig())) == 64
