import math

from viws.config import TrainConfig
from viws.model.adversarial import lambda_schedule


def lr_at(epoch: int, config: TrainConfig) -> float:
    """lr0 * factor ** floor(epoch / decay_every)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return config.lr0 * config.lr_decay_factor ** math.floor(epoch / config.lr_decay_every)


def progress(iteration: int, total_iterations: int) -> float:
    if total_iterations <= 0:
        return 1.0
    return min(iteration / total_iterations, 1.0)


def lambda_at(iteration: int, total_iterations: int) -> float:
    return lambda_schedule(progress(iteration, total_iterations))
