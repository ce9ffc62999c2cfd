from viws.training.batch import TrainingSample, build_batch, to_tensors, validation_clips
from viws.training.checkpoint import TrainState, checkpoint_load, checkpoint_save
from viws.training.schedule import lambda_at, lr_at
from viws.training.trainer import Trainer

__all__ = [
    "Trainer",
    "TrainState",
    "TrainingSample",
    "build_batch",
    "checkpoint_load",
    "checkpoint_save",
    "lambda_at",
    "lr_at",
    "to_tensors",
    "validation_clips",
]
