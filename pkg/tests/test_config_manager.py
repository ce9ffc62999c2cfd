"""
Tests for ConfigManager class.

This module covers loading run-config files, preset resolution, unknown-key
rejection, environment overrides, resolved-config echoing and concurrent
access to the singleton.
"""

import json
import os
import shutil
import tempfile
import threading
from pathlib import Path

import pytest
from viws.config import (
    OUTPUT_ROOT_ENV,
    RESOLVED_CONFIG_NAME,
    ConfigManager,
    RunConfig,
    preset_run_config,
)
from viws.errors import ConfigurationError


def setup_function(function):
    """Set up test environment with temporary config file."""
    global temp_dir, temp_config
    temp_dir = tempfile.mkdtemp()
    temp_config = os.path.join(temp_dir, "config.json")
    with open(temp_config, "w", encoding="utf-8") as f:
        json.dump({}, f)
    ConfigManager.reset()


def teardown_function(function):
    """Clean up test environment."""
    if Path(temp_dir).exists():
        shutil.rmtree(temp_dir)
    ConfigManager.reset()


def _write(data, name="config.json"):
    path = os.path.join(temp_dir, name)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)
    return path


def test_defaults_are_desk_preset():
    config = ConfigManager.run_config()
    assert config.preset == "desk"
    assert config.model.encoder.channels == [16, 32, 64, 128]
    assert config.model.num_messengers == 48
    assert config.train.batch_size == 3


def test_empty_file_gives_desk():
    config = ConfigManager.use_config_file(temp_config)
    assert config.to_dict() == preset_run_config("desk").to_dict()


def test_file_overrides_merge_into_preset():
    path = _write({"seed": 7, "train": {"epochs": 3, "loss": {"gamma1": 0}}})
    config = ConfigManager.use_config_file(path)
    assert config.seed == 7
    assert config.train.epochs == 3
    # int in JSON becomes the float the field holds
    assert config.train.loss.gamma1 == 0.0 and isinstance(config.train.loss.gamma1, float)
    assert config.train.loss.gamma2 == 0.001
    assert ConfigManager.run_config().seed == 7


def test_full_preset():
    config = ConfigManager.use_config_file(_write({"preset": "full"}))
    assert config.model.encoder.channels == [64, 128, 256, 512]
    assert config.train.batch_size == 12
    assert config.train.crop == 224


def test_unknown_key_rejected():
    path = _write({"train": {"epochz": 3}})
    with pytest.raises(ConfigurationError, match="train.epochz"):
        ConfigManager.use_config_file(path)


def test_unknown_preset_rejected():
    with pytest.raises(ConfigurationError):
        ConfigManager.use_config_file(_write({"preset": "huge"}))


def test_invalid_combination_rejected():
    with pytest.raises(ConfigurationError, match="batch_size"):
        ConfigManager.load_dict({"train": {"batch_size": 4}})
    with pytest.raises(ConfigurationError, match="not divisible"):
        ConfigManager.load_dict({"model": {"num_messengers": 50}})
    with pytest.raises(ConfigurationError, match="lr_decay_every"):
        ConfigManager.load_dict({"train": {"lr_decay_every": 0}})


def test_bad_json():
    path = os.path.join(temp_dir, "broken.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write("{not json")
    with pytest.raises(ConfigurationError):
        ConfigManager.use_config_file(path)


def test_use_config_file_nonexistent():
    nonexistent_config = os.path.join(temp_dir, "nonexistent.json")
    with pytest.raises(FileNotFoundError, match="Config file .* not found"):
        ConfigManager.use_config_file(nonexistent_config)


def test_env_override(monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, os.path.join(temp_dir, "elsewhere"))
    assert ConfigManager.run_config().paths.output_root == os.path.join(temp_dir, "elsewhere")


def test_run_config_is_a_copy():
    config = ConfigManager.run_config()
    config.seed = 99
    assert ConfigManager.run_config().seed == 0


def test_write_resolved_round_trips():
    ConfigManager.load_dict({"seed": 5, "model": {"n": 1}})
    target = ConfigManager.write_resolved(os.path.join(temp_dir, "out"))
    assert target.name == RESOLVED_CONFIG_NAME
    with open(target, encoding="utf-8") as f:
        data = json.load(f)
    assert RunConfig.from_dict(data).to_dict() == ConfigManager.run_config().to_dict()


def test_fingerprint_tracks_architecture():
    a = preset_run_config("desk").model
    b = preset_run_config("desk").model
    assert a.fingerprint() == b.fingerprint()
    b.num_messengers = 24
    assert a.fingerprint() != b.fingerprint()


def test_thread_safety():
    """Concurrent loads always leave one of the written configs active."""
    seeds = list(range(10))
    errors = []

    def loader(seed: int):
        try:
            ConfigManager.load_dict({"seed": seed})
            assert ConfigManager.run_config().seed in seeds
        except Exception as e:  # noqa: BLE001
            errors.append(e)

    threads = [threading.Thread(target=loader, args=(s,)) for s in seeds]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert not errors
    assert ConfigManager.run_config().seed in seeds
