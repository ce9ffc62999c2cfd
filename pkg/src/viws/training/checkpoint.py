"""
Training checkpoints.

A checkpoint holds everything needed to continue a run bit-for-bit: model and
optimizer state, epoch/iteration counters, the data RNG and the torch RNG.
The model config fingerprint is stored alongside and must match on load.
"""

import io
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch

from viws.errors import CheckpointError
from viws.model.network import ViWSNet

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainState:
    model: ViWSNet
    optimizer: torch.optim.Optimizer
    data_rng: np.random.Generator
    epoch: int = 0
    iteration: int = 0
    best_average: float = float("-inf")


def checkpoint_save(path: str | Path, state: TrainState) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "fingerprint": state.model.config.fingerprint(),
        "model_config": asdict(state.model.config),
        "model": state.model.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "epoch": state.epoch,
        "iteration": state.iteration,
        "best_average": state.best_average,
        "data_rng": state.data_rng.bit_generator.state,
        "torch_rng": torch.get_rng_state(),
    }
    # torch.save(obj, path) names the zip records after the file stem
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    path.write_bytes(buffer.getvalue())
    logger.debug(f"checkpoint written to {path} at iteration {state.iteration}")
    return path


def read_checkpoint(path: str | Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} is not a version {CHECKPOINT_VERSION} viws checkpoint")
    return payload


def checkpoint_load(path: str | Path, state: TrainState, restore_rng: bool = True) -> TrainState:
    """Load a checkpoint into an existing state built from the same model config."""
    payload = read_checkpoint(path)
    expected = state.model.config.fingerprint()
    if payload["fingerprint"] != expected:
        raise CheckpointError(
            f"checkpoint {path} was written for model config {payload['fingerprint'][:12]}, "
            f"current config is {expected[:12]}"
        )
    try:
        state.model.load_state_dict(payload["model"])
        state.optimizer.load_state_dict(payload["optimizer"])
    except (RuntimeError, ValueError, KeyError) as e:
        raise CheckpointError(f"checkpoint {path} does not fit the model: {e}") from e
    state.epoch = int(payload["epoch"])
    state.iteration = int(payload["iteration"])
    state.best_average = float(payload["best_average"])
    if restore_rng:
        state.data_rng.bit_generator.state = payload["data_rng"]
        torch.set_rng_state(payload["torch_rng"])
    logger.info(f"resumed from {path} at epoch {state.epoch}, iteration {state.iteration}")
    return state


def load_model_weights(path: str | Path, model: ViWSNet) -> ViWSNet:
    payload = read_checkpoint(path)
    if payload["fingerprint"] != model.config.fingerprint():
        raise CheckpointError(f"checkpoint {path} does not match the configured model")
    model.load_state_dict(payload["model"])
    return model
