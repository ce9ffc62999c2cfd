"""Value types shared by the data, synthesis, training and evaluation code."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from viws.errors import ConfigurationError, ShapeError


class WeatherLabel(IntEnum):
    rain = 0
    haze = 1
    snow = 2

    @classmethod
    def parse(cls, value: "WeatherLabel | str | int") -> WeatherLabel:
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.lower()]
            except KeyError:
                raise ConfigurationError(f"unknown weather {value!r}") from None
        return cls(int(value))


NUM_WEATHERS = len(WeatherLabel)


@dataclass
class VideoClip:
    """T = 2n+1 consecutive frames centred on the target frame."""

    frames: np.ndarray  # (T, H, W, 3) float32 in [0, 1]
    weather: WeatherLabel
    target_index: int
    video_id: str
    frame_indices: List[int]
    # reflect padding added at load time, (bottom, right)
    padding: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ShapeError(f"clip frames must be (T, H, W, 3), got {self.frames.shape}")
        t = self.frames.shape[0]
        if t % 2 != 1 or self.target_index != t // 2:
            raise ShapeError(
                f"clip of {t} frames must be odd-length with the target in the centre"
            )
        if len(self.frame_indices) != t:
            raise ShapeError("frame_indices must list one index per frame")
        if any(b - a != 1 for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ShapeError(f"frame_indices not consecutive: {self.frame_indices}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n(self) -> int:
        return self.num_frames // 2

    @property
    def target(self) -> np.ndarray:
        return self.frames[self.target_index]


@dataclass
class FramePair:
    prediction: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        if self.prediction.shape != self.ground_truth.shape:
            raise ShapeError(
                f"prediction {self.prediction.shape} and ground truth "
                f"{self.ground_truth.shape} differ in shape"
            )

    def clamped(self) -> Tuple[np.ndarray, np.ndarray]:
        return (
            np.clip(self.prediction.astype(np.float64), 0.0, 1.0),
            np.clip(self.ground_truth.astype(np.float64), 0.0, 1.0),
        )


@dataclass
class ManifestEntry:
    video_id: str
    weather: WeatherLabel
    clean_dir: str
    degraded_dir: str
    num_frames: int
    split: str  # "train" | "test"

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["weather"] = self.weather.name
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> ManifestEntry:
        return cls(
            video_id=data["video_id"],
            weather=WeatherLabel.parse(data["weather"]),
            clean_dir=data["clean_dir"],
            degraded_dir=data["degraded_dir"],
            num_frames=int(data["num_frames"]),
            split=data["split"],
        )


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry] = field(default_factory=list)
    # directories in entries are relative to root
    root: str = "."

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = [e.video_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ConfigurationError("manifest video_ids are not unique")
        for entry in self.entries:
            if entry.split not in ("train", "test"):
                raise ConfigurationError(
                    f"{entry.video_id}: split must be train or test, got {entry.split!r}"
                )

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def by_weather(self, weather: WeatherLabel, split: str = "train") -> List[ManifestEntry]:
        return [e for e in self.split(split) if e.weather == weather]

    def resolve(self, relative: str) -> Path:
        return Path(self.root) / relative

    def merged(self, other: DatasetManifest) -> DatasetManifest:
        return DatasetManifest(self.entries + other.entries, root=self.root)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            json.dump(
                {"entries": [e.to_dict() for e in self.entries]},
                f,
                indent=2,
                sort_keys=True,
            )

    @classmethod
    def load(cls, path: str | Path) -> DatasetManifest:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"manifest {path} not found")
        with path.open("r", encoding="utf-8") as f:
            data = json.load(f)
        entries = [ManifestEntry.from_dict(e) for e in data.get("entries", [])]
        return cls(entries, root=str(path.parent))
