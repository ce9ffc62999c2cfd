import json
import math
import os
import sys

import numpy as np
import pytest
import torch

# Add src to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), "src"))

from viws.config import RunConfig, TrainConfig, train_preset
from viws.data.types import WeatherLabel
from viws.errors import CheckpointError, NonFiniteLossError, RangeError
from viws.model.adversarial import lambda_schedule
from viws.model.network import parameter_groups
from viws.training import (
    Trainer,
    TrainState,
    build_batch,
    checkpoint_load,
    checkpoint_save,
    lambda_at,
    lr_at,
    to_tensors,
    validation_clips,
)
from viws.training.readout import frozen_descriptors, linear_readout_accuracy
from viws.training.trainer import BEST_CHECKPOINT, LAST_CHECKPOINT


def _toy_config(tmp_path, **train):
    overrides = {"crop": 32, "epochs": 1, "steps_per_epoch": 2, "val_every": 0, "checkpoint_every": 0}
    overrides.update(train)
    return RunConfig.from_dict(
        {
            "preset": "toy",
            "seed": 5,
            "paths": {"output_root": str(tmp_path / "run")},
            "train": overrides,
        }
    )


@pytest.fixture
def trainer(tmp_path, small_dataset):
    return Trainer(_toy_config(tmp_path), small_dataset, tmp_path / "run")


def _snapshot(model):
    return {name: p.detach().clone() for name, p in model.named_parameters()}


# build_batch


def test_batch_has_one_clip_per_weather(small_dataset):
    samples = build_batch(small_dataset, TrainConfig(crop=32), 1, np.random.default_rng(0))
    assert [s.label for s in samples] == list(WeatherLabel)
    for sample in samples:
        assert sample.degraded.frames.shape == (3, 32, 32, 3)
        assert sample.clean.frames.shape == (3, 32, 32, 3)
        assert sample.degraded.frame_indices == sample.clean.frame_indices
        assert sample.degraded.weather == sample.label


def test_batch_is_reproducible_from_the_generator(small_dataset):
    config = TrainConfig(batch_size=6, clips_per_weather=2, crop=32)
    a = build_batch(small_dataset, config, 2, np.random.default_rng(9))
    b = build_batch(small_dataset, config, 2, np.random.default_rng(9))
    assert len(a) == 6
    for x, y in zip(a, b):
        assert x.degraded.video_id == y.degraded.video_id
        assert np.array_equal(x.degraded.frames, y.degraded.frames)
        assert np.array_equal(x.target, y.target)


def test_batch_rejects_short_videos(small_dataset):
    with pytest.raises(RangeError):
        build_batch(small_dataset, TrainConfig(crop=32), 5, np.random.default_rng(0))


def test_to_tensors_layout(small_dataset):
    samples = build_batch(small_dataset, TrainConfig(crop=32), 1, np.random.default_rng(1))
    frames, targets, labels = to_tensors(samples)
    assert tuple(frames.shape) == (3, 3, 3, 32, 32)
    assert tuple(targets.shape) == (3, 3, 32, 32)
    assert labels.tolist() == [0, 1, 2]
    assert torch.equal(targets[0], torch.from_numpy(samples[0].target).permute(2, 0, 1))


def test_validation_clips_cover_the_test_split(small_dataset):
    samples = validation_clips(small_dataset, n=2, per_video=2)
    assert len(samples) == 6
    assert {s.degraded.video_id for s in samples} == {e.video_id for e in small_dataset.split("test")}
    assert all(s.degraded.frames.shape == (5, 64, 64, 3) for s in samples)


# schedules


@pytest.mark.parametrize("epoch,expected", [(0, 2e-4), (99, 2e-4), (100, 1e-4), (250, 5e-5)])
def test_full_learning_rate_schedule(epoch, expected):
    assert lr_at(epoch, train_preset("full")) == pytest.approx(expected, rel=1e-12)


def test_desk_learning_rate_schedule():
    config = train_preset("desk")
    assert lr_at(7, config) == pytest.approx(5e-4)
    assert lr_at(8, config) == pytest.approx(2.5e-4)
    with pytest.raises(ValueError):
        lr_at(-1, config)


def test_lambda_follows_iteration_progress():
    assert lambda_at(0, 100) == 0.0
    assert lambda_at(50, 100) == pytest.approx(0.986614, abs=1e-6)
    assert lambda_at(100, 100) == pytest.approx(0.999909, abs=1e-6)
    # past the end stays at the final value
    assert lambda_at(250, 100) == lambda_schedule(1.0)
    assert lambda_at(0, 0) == lambda_schedule(1.0)


# trainer


def test_train_step_logs_every_component(trainer):
    records = [trainer.train_step(trainer.next_batch()) for _ in range(2)]
    assert [r["iteration"] for r in records] == [1, 2]
    for record in records:
        for key in ("smooth_l1", "perceptual", "adversarial", "total", "lr", "lambda"):
            assert math.isfinite(record[key])
        expected = record["smooth_l1"] + 0.04 * record["perceptual"] + 0.001 * record["adversarial"]
        assert record["total"] == pytest.approx(expected, rel=1e-5)
    assert records[0]["lambda"] == 0.0
    assert records[1]["lambda"] > 0.0
    lines = trainer.log_path.read_text(encoding="utf-8").splitlines()
    assert [json.loads(line) for line in lines] == records


def test_zero_learning_rate_changes_nothing(tmp_path, small_dataset):
    trainer = Trainer(_toy_config(tmp_path, lr0=0.0), small_dataset, tmp_path / "run")
    before = _snapshot(trainer.model)
    trainer.train_step(trainer.next_batch())
    trainer.train_step(trainer.next_batch())
    for name, param in trainer.model.named_parameters():
        assert torch.equal(param, before[name]), name


def test_every_component_is_trained(trainer):
    before = _snapshot(trainer.model)
    for _ in range(3):
        trainer.train_step(trainer.next_batch())
    groups = parameter_groups(trainer.model)
    assert sorted(groups) == ["decoder", "discriminator", "encoder", "messengers", "refine"]
    params = dict(trainer.model.named_parameters())
    for group, names in groups.items():
        changed = [n for n in names if not torch.equal(params[n], before[n])]
        assert changed, f"no {group} parameter moved"


def test_overfit_batch_is_fixed(tmp_path, small_dataset):
    trainer = Trainer(_toy_config(tmp_path, overfit=True), small_dataset, tmp_path / "run")
    assert trainer.next_batch() is trainer.next_batch()


def test_non_finite_loss_stops_before_the_update(trainer):
    with torch.no_grad():
        trainer.model.refine.pyramid.head.bias.fill_(float("nan"))
    before = _snapshot(trainer.model)
    with pytest.raises(NonFiniteLossError) as info:
        trainer.train_step(trainer.next_batch())
    assert math.isnan(info.value.components["total"])
    assert (trainer.output_dir / "nonfinite_dump.json").exists()
    assert trainer.state.iteration == 0
    for name, param in trainer.model.named_parameters():
        assert torch.equal(param, before[name]) or torch.isnan(param).any(), name


def test_fit_writes_checkpoints_and_validates(tmp_path, small_dataset):
    config = _toy_config(tmp_path, val_every=1, checkpoint_every=1, val_clips_per_video=1)
    trainer = Trainer(config, small_dataset, tmp_path / "run")
    state = trainer.fit()
    assert state.iteration == 2
    assert state.epoch == 1
    assert (tmp_path / "run" / LAST_CHECKPOINT).exists()
    assert (tmp_path / "run" / BEST_CHECKPOINT).exists()
    assert math.isfinite(state.best_average)
    assert len(trainer.log_path.read_text(encoding="utf-8").splitlines()) == 2


# checkpoints


def test_checkpoint_save_is_idempotent(tmp_path, small_dataset, trainer):
    trainer.train_step(trainer.next_batch())
    a = checkpoint_save(tmp_path / "a.pt", trainer.state)
    b = checkpoint_save(tmp_path / "b.pt", trainer.state)
    assert a.read_bytes() == b.read_bytes()

    reloaded = Trainer(_toy_config(tmp_path), small_dataset, tmp_path / "reloaded")
    checkpoint_load(a, reloaded.state)
    c = checkpoint_save(tmp_path / "c.pt", reloaded.state)
    assert c.read_bytes() == a.read_bytes()


def test_resume_is_bitwise(tmp_path, small_dataset):
    config = _toy_config(tmp_path)
    first = Trainer(config, small_dataset, tmp_path / "first")
    for _ in range(2):
        first.train_step(first.next_batch())
    path = checkpoint_save(tmp_path / "mid.pt", first.state)
    first_records = [first.train_step(first.next_batch()) for _ in range(2)]

    second = Trainer(config, small_dataset, tmp_path / "second")
    second.resume(path)
    assert second.state.iteration == 2
    second_records = [second.train_step(second.next_batch()) for _ in range(2)]

    assert first_records == second_records
    params = dict(second.model.named_parameters())
    for name, param in first.model.named_parameters():
        assert torch.equal(param, params[name]), name


def test_checkpoint_rejects_other_configs(tmp_path, small_dataset, trainer):
    path = checkpoint_save(tmp_path / "toy.pt", trainer.state)
    other_config = _toy_config(tmp_path)
    other_config.model.num_messengers = 12
    other = Trainer(other_config, small_dataset, tmp_path / "other")
    with pytest.raises(CheckpointError):
        checkpoint_load(path, other.state)


def test_checkpoint_read_errors(tmp_path, trainer):
    with pytest.raises(FileNotFoundError):
        checkpoint_load(tmp_path / "missing.pt", trainer.state)
    garbage = tmp_path / "garbage.pt"
    garbage.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        checkpoint_load(garbage, trainer.state)


def test_train_state_defaults(trainer):
    state = trainer.state
    assert isinstance(state, TrainState)
    assert (state.epoch, state.iteration) == (0, 0)
    assert state.best_average == float("-inf")


# weather readout


def test_readout_separates_separable_descriptors():
    g = torch.Generator().manual_seed(0)
    labels = torch.arange(3).repeat(10)
    x = torch.nn.functional.one_hot(labels, 3).double() * 4 + 0.1 * torch.randn(30, 3, generator=g, dtype=torch.float64)
    assert linear_readout_accuracy(x[:21], labels[:21], x[21:], labels[21:]) == 1.0


def test_readout_cannot_beat_chance_on_constant_descriptors():
    labels = torch.arange(3).repeat(4)
    x = torch.ones(12, 5, dtype=torch.float64)
    accuracy = linear_readout_accuracy(x, labels, x, labels)
    assert accuracy == pytest.approx(1 / 3)


def test_frozen_descriptors(trainer, small_dataset):
    samples = validation_clips(small_dataset, n=1, per_video=1)
    x, y = frozen_descriptors(trainer.model, samples)
    assert tuple(x.shape) == (3, 32)
    assert x.dtype == torch.float64
    assert sorted(y.tolist()) == [0, 1, 2]
