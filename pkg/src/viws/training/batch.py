"""Mixed-weather batches: the same number of clips from every weather type."""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import torch

from viws.config import TrainConfig
from viws.data.io import crop_and_augment, load_clip
from viws.data.types import DatasetManifest, VideoClip, WeatherLabel
from viws.errors import ConfigurationError, RangeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingSample:
    degraded: VideoClip
    clean: VideoClip
    label: WeatherLabel

    @property
    def target(self) -> np.ndarray:
        return self.clean.target


def build_batch(
    manifest: DatasetManifest,
    config: TrainConfig,
    n: int,
    rng: np.random.Generator,
    split: str = "train",
) -> List[TrainingSample]:
    """
    clips_per_weather clips for each of rain, haze and snow, in that order.

    Every draw (video, center frame, crop window) comes from rng, so a cloned
    generator reproduces the batch exactly.
    """
    samples = []
    for weather in WeatherLabel:
        entries = manifest.by_weather(weather, split)
        if not entries:
            raise ConfigurationError(f"manifest has no {split} videos for {weather.name}")
        for _ in range(config.clips_per_weather):
            entry = entries[int(rng.integers(len(entries)))]
            if entry.num_frames < 2 * n + 1:
                raise RangeError(f"{entry.video_id} has {entry.num_frames} frames, need {2 * n + 1}")
            center = int(rng.integers(n, entry.num_frames - n))
            crop_seed = int(rng.integers(2**31))
            degraded = load_clip(entry, center, n, degraded=True, root=manifest.root)
            clean = load_clip(entry, center, n, degraded=False, root=manifest.root)
            degraded, clean = crop_and_augment(
                degraded, config.crop, crop_seed, flip=config.flip, paired=clean
            )
            samples.append(TrainingSample(degraded, clean, weather))
    logger.debug(f"batch: {[(s.degraded.video_id, s.degraded.frame_indices[n]) for s in samples]}")
    return samples


def validation_clips(
    manifest: DatasetManifest, n: int, per_video: int, split: str = "test"
) -> List[TrainingSample]:
    """Evenly spaced full-frame clips from every held-out video."""
    samples = []
    for entry in manifest.split(split):
        last = entry.num_frames - n - 1
        if last < n:
            continue
        centers = np.unique(np.linspace(n, last, num=max(per_video, 1)).round().astype(int))
        for center in centers:
            samples.append(
                TrainingSample(
                    load_clip(entry, int(center), n, degraded=True, root=manifest.root),
                    load_clip(entry, int(center), n, degraded=False, root=manifest.root),
                    entry.weather,
                )
            )
    return samples


def to_tensors(
    samples: List[TrainingSample], device: str = "cpu"
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(B, T, 3, H, W) degraded clips, (B, 3, H, W) clean targets and (B,) labels."""
    frames = np.stack([s.degraded.frames for s in samples])
    targets = np.stack([s.target for s in samples])
    labels = torch.tensor([int(s.label) for s in samples], dtype=torch.long, device=device)
    frames = torch.from_numpy(np.ascontiguousarray(frames)).permute(0, 1, 4, 2, 3).float()
    targets = torch.from_numpy(np.ascontiguousarray(targets)).permute(0, 3, 1, 2).float()
    return frames.to(device), targets.to(device), labels
