"""
Linear weather readout on frozen encoder features.

A fresh linear classifier is fitted on clip descriptors (spatial and temporal
mean of the final-stage pixel features). Its held-out accuracy measures how
much weather identity the encoder still exposes.
"""

import logging
from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from viws.data.types import NUM_WEATHERS
from viws.model.network import ViWSNet
from viws.training.batch import TrainingSample, to_tensors

logger = logging.getLogger(__name__)


@torch.no_grad()
def frozen_descriptors(
    model: ViWSNet, samples: List[TrainingSample], device: str = "cpu"
) -> Tuple[torch.Tensor, torch.Tensor]:
    model.eval()
    features, labels = [], []
    for sample in samples:
        frames, _, label = to_tensors([sample], device)
        messengers = model.messengers(1) if model.messengers is not None else None
        encoded = model.encoder(frames, messengers)
        features.append(encoded.features[-1].mean(dim=(1, 2)))
        labels.append(label)
    return torch.cat(features).double(), torch.cat(labels)


def linear_readout_accuracy(
    train_x: torch.Tensor,
    train_y: torch.Tensor,
    test_x: torch.Tensor,
    test_y: torch.Tensor,
    steps: int = 300,
    lr: float = 0.1,
    seed: int = 0,
) -> float:
    mean, std = train_x.mean(dim=0), train_x.std(dim=0).clamp_min(1e-8)
    train_x = (train_x - mean) / std
    test_x = (test_x - mean) / std
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        head = nn.Linear(train_x.shape[1], NUM_WEATHERS).double()
    optimizer = torch.optim.Adam(head.parameters(), lr=lr)
    for _ in range(steps):
        optimizer.zero_grad()
        F.cross_entropy(head(train_x), train_y).backward()
        optimizer.step()
    with torch.no_grad():
        accuracy = (head(test_x).argmax(dim=1) == test_y).double().mean().item()
    logger.info(f"linear weather readout accuracy {accuracy:.3f} on {len(test_y)} clips")
    return accuracy


def weather_readout_accuracy(
    model: ViWSNet,
    train_samples: List[TrainingSample],
    test_samples: List[TrainingSample],
    device: str = "cpu",
    seed: int = 0,
) -> float:
    train_x, train_y = frozen_descriptors(model, train_samples, device)
    test_x, test_y = frozen_descriptors(model, test_samples, device)
    return linear_readout_accuracy(train_x, train_y, test_x, test_y, seed=seed)
