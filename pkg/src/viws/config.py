"""
Configuration for viws runs.

This module holds the typed configuration records (model, training, synthesis,
inference and evaluation sections), the named presets, and a thread-safe
singleton ConfigManager that loads a JSON run-config file, rejects unknown
keys, applies environment overrides and echoes the resolved config beside
every command's outputs.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from threading import RLock
from typing import Any, Dict, List, Optional, Tuple

from viws.errors import ConfigurationError

OUTPUT_ROOT_ENV = "VIWS_OUTPUT_ROOT"
RESOLVED_CONFIG_NAME = "resolved_config.json"
WEATHER_NAMES = ("rain", "haze", "snow")

# (direction, step) per messenger group: short-term half then long-term half
DEFAULT_SHIFT_PLAN: List[Tuple[str, int]] = [
    ("none", 0),
    ("forward", 1),
    ("backward", 1),
    ("none", 0),
    ("forward", 2),
    ("backward", 2),
]


@dataclass
class EncoderConfig:
    channels: List[int] = field(default_factory=lambda: [16, 32, 64, 128])
    heads: List[int] = field(default_factory=lambda: [1, 2, 4, 8])
    blocks_per_stage: List[int] = field(default_factory=lambda: [2, 2, 2, 2])
    reduction_ratios: List[Tuple[int, int]] = field(
        default_factory=lambda: [(8, 4), (4, 2), (2, 1), (1, 1)]
    )
    mlp_ratios: List[int] = field(default_factory=lambda: [8, 8, 4, 4])
    stem_kernel: int = 7
    stem_stride: int = 4
    stem_padding: int = 3
    merge_kernel: int = 3
    merge_stride: int = 2
    merge_padding: int = 1

    @property
    def num_stages(self) -> int:
        return len(self.channels)

    @property
    def total_stride(self) -> int:
        return self.stem_stride * self.merge_stride ** (self.num_stages - 1)

    def validate(self) -> None:
        n = self.num_stages
        for name in ("heads", "blocks_per_stage", "reduction_ratios", "mlp_ratios"):
            if len(getattr(self, name)) != n:
                raise ConfigurationError(
                    f"encoder.{name} has {len(getattr(self, name))} entries, expected {n}"
                )
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ConfigurationError(
                f"encoder.channels must be strictly increasing, got {self.channels}"
            )
        for c, h in zip(self.channels, self.heads):
            if h < 1 or c % h:
                raise ConfigurationError(f"{c} channels cannot be split into {h} heads")
        for pair in self.reduction_ratios:
            if len(pair) != 2 or min(pair) < 1:
                raise ConfigurationError(f"bad reduction ratio pair {pair}")


@dataclass
class DecoderConfig:
    num_blocks: int = 2
    heads: int = 4
    fusion_channels: List[int] = field(default_factory=lambda: [64, 32, 16, 16])
    temporal_channels: int = 16
    temporal_kernel: Tuple[int, int, int] = (3, 3, 3)
    refine_scale: float = 0.5
    refine_stages: int = 2


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    n: int = 2
    num_messengers: int = 48
    descriptor_dim: int = 128
    attention_dim: int = 64
    adv_taps: List[int] = field(default_factory=lambda: [4])
    shift_plan: List[Tuple[str, int]] = field(
        default_factory=lambda: list(DEFAULT_SHIFT_PLAN)
    )
    shift_per_block: bool = False
    messenger_seed: int = 0
    # module ablations
    use_messengers: bool = True
    use_video_decoder: bool = True
    use_adversarial: bool = True
    use_temporal_fusion: bool = True
    use_refine: bool = True

    @property
    def num_frames(self) -> int:
        return 2 * self.n + 1

    def validate(self) -> None:
        self.encoder.validate()
        if self.n < 0:
            raise ConfigurationError(f"n must be >= 0, got {self.n}")
        if len(self.decoder.fusion_channels) != self.encoder.num_stages:
            raise ConfigurationError(
                "decoder.fusion_channels must have one width per encoder stage"
            )
        if self.num_messengers % len(self.shift_plan):
            raise ConfigurationError(
                f"num_messengers={self.num_messengers} is not divisible into "
                f"{len(self.shift_plan)} groups"
            )
        for tap in self.adv_taps:
            if not 1 <= tap <= self.encoder.num_stages:
                raise ConfigurationError(f"adv_taps entry {tap} is not a stage index")
        if self.use_temporal_fusion and self.num_frames < 3:
            raise ConfigurationError("temporal fusion needs clips of at least 3 frames")

    def fingerprint(self) -> str:
        canonical = json.dumps(_to_jsonable(asdict(self)), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class LossWeights:
    gamma1: float = 0.04
    gamma2: float = 0.001


@dataclass
class PerceptualConfig:
    pretrained: bool = False
    # ImageNet mean/std normalization before the extractor
    normalize: bool = True
    seed: int = 0


@dataclass
class TrainConfig:
    batch_size: int = 3
    clips_per_weather: int = 1
    epochs: int = 20
    steps_per_epoch: int = 100
    lr0: float = 5e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 8
    crop: int = 64
    flip: bool = False
    overfit: bool = False
    log_every: int = 10
    val_every: int = 1
    val_clips_per_video: int = 2
    checkpoint_every: int = 1
    loss: LossWeights = field(default_factory=LossWeights)
    perceptual: PerceptualConfig = field(default_factory=PerceptualConfig)

    @property
    def total_iterations(self) -> int:
        return self.epochs * self.steps_per_epoch

    def validate(self) -> None:
        if self.batch_size != len(WEATHER_NAMES) * self.clips_per_weather:
            raise ConfigurationError(
                f"batch_size={self.batch_size} must equal "
                f"{len(WEATHER_NAMES)} x clips_per_weather={self.clips_per_weather}"
            )
        if self.crop % 32:
            raise ConfigurationError(f"crop={self.crop} is not divisible by 32")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigurationError("epochs and steps_per_epoch must be positive")
        if self.lr_decay_every < 1:
            raise ConfigurationError(f"lr_decay_every must be positive, got {self.lr_decay_every}")


@dataclass
class SynthesisConfig:
    counts: Dict[str, int] = field(
        default_factory=lambda: {"rain": 3, "haze": 3, "snow": 3}
    )
    split_ratio: float = 0.7
    height: int = 96
    width: int = 128
    num_frames: int = 10
    generate_sources: bool = True
    source_count: int = 4


@dataclass
class InferConfig:
    output_dir: str = ""
    device: str = "cpu"


@dataclass
class EvaluateConfig:
    csv_name: str = "metrics.csv"
    summary_name: str = "summary.json"


@dataclass
class PathsConfig:
    clean_root: str = "data/clean"
    dataset_root: str = "data/desk"
    output_root: str = "runs/desk"


@dataclass
class RunConfig:
    preset: str = "desk"
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    synthesize: SynthesisConfig = field(default_factory=SynthesisConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        unknown = set(self.synthesize.counts) - set(WEATHER_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown weather(s) in counts: {sorted(unknown)}")

    def to_dict(self) -> Dict[str, Any]:
        return _to_jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> RunConfig:
        data = dict(data)
        preset = data.get("preset", "desk")
        base = preset_run_config(preset)
        merged = _merge(base, data, "")
        merged.validate()
        return merged


def model_preset(name: str) -> ModelConfig:
    if name == "toy":
        return ModelConfig(
            encoder=EncoderConfig(
                channels=[8, 16, 32],
                heads=[1, 2, 2],
                blocks_per_stage=[1, 1, 1],
                reduction_ratios=[(2, 1), (1, 1), (1, 1)],
                mlp_ratios=[2, 2, 2],
            ),
            decoder=DecoderConfig(
                num_blocks=1, heads=2, fusion_channels=[16, 8, 8], temporal_channels=4
            ),
            n=1,
            num_messengers=6,
            descriptor_dim=16,
            attention_dim=8,
            adv_taps=[3],
        )
    if name == "desk":
        return ModelConfig()
    if name == "full":
        return ModelConfig(
            encoder=EncoderConfig(
                channels=[64, 128, 256, 512],
                heads=[2, 4, 8, 16],
                blocks_per_stage=[1, 2, 4, 1],
            ),
            decoder=DecoderConfig(heads=8, fusion_channels=[256, 128, 64, 32]),
            descriptor_dim=256,
            attention_dim=128,
        )
    raise ConfigurationError(f"unknown model preset {name!r}")


def train_preset(name: str) -> TrainConfig:
    if name in ("toy", "desk"):
        return TrainConfig()
    if name == "full":
        return TrainConfig(
            batch_size=12,
            clips_per_weather=4,
            epochs=500,
            steps_per_epoch=100,
            lr0=2e-4,
            lr_decay_every=100,
            crop=224,
        )
    raise ConfigurationError(f"unknown training preset {name!r}")


def preset_run_config(name: str) -> RunConfig:
    config = RunConfig(preset=name, model=model_preset(name), train=train_preset(name))
    if name == "full":
        config.synthesize = SynthesisConfig(
            counts={"rain": 50, "haze": 50, "snow": 50}, height=300, width=1000
        )
    return config


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _coerce_like(current: Any, value: Any, path: str) -> Any:
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path} expects a list")
        return tuple(value)
    if isinstance(current, list) and current and isinstance(current[0], tuple):
        return [tuple(v) for v in value]
    if isinstance(current, bool) and not isinstance(value, bool):
        raise ConfigurationError(f"{path} expects true/false, got {value!r}")
    if isinstance(current, float) and isinstance(value, int):
        return float(value)
    return value


def _merge(instance: Any, overrides: Dict[str, Any], prefix: str) -> Any:
    if not isinstance(overrides, dict):
        raise ConfigurationError(f"{prefix or 'config'} must be a mapping")
    known = {f.name for f in dataclasses.fields(instance)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        names = ", ".join(f"{prefix}{k}" for k in unknown)
        raise ConfigurationError(f"unknown config key(s): {names}")
    changes = {}
    for key, value in overrides.items():
        current = getattr(instance, key)
        path = f"{prefix}{key}"
        if dataclasses.is_dataclass(current):
            changes[key] = _merge(current, value, f"{path}.")
        else:
            changes[key] = _coerce_like(current, value, path)
    return dataclasses.replace(instance, **changes)


class ConfigManager:
    """
    Thread-safe singleton holding the active run configuration.

    The manager is loaded once per process (from a JSON file or a mapping) and
    then read by the synthesis, training, inference and evaluation entry
    points. Values that are not part of the run config can be looked up from
    the environment with `get`.
    """

    _instance: Optional["ConfigManager"] = None
    _lock = RLock()  # use RLock for reentrant locking

    @classmethod
    def get_instance(cls) -> ConfigManager:
        """Get singleton instance."""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = cls()
        return cls._instance

    def __init__(self) -> None:
        self._config_path: Optional[Path] = None
        self._config: RunConfig = preset_run_config("desk")

    @classmethod
    def use_config_file(cls, file_path: str) -> RunConfig:
        """Load a JSON run-config file and make it the active config."""
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Config file {path} not found!")
        try:
            with path.open("r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path} is not valid JSON: {e}") from e
        config = cls.load_dict(data)
        cls.get_instance()._config_path = path
        return config

    @classmethod
    def load_dict(cls, data: Dict[str, Any]) -> RunConfig:
        config = RunConfig.from_dict(data)
        with cls._lock:
            instance = cls.get_instance()
            instance._config = config
            instance._config_path = None
        return config

    @classmethod
    def run_config(cls) -> RunConfig:
        """Return a copy of the active config with env overrides applied."""
        instance = cls.get_instance()
        with instance._lock:
            config = copy.deepcopy(instance._config)
        override = os.environ.get(OUTPUT_ROOT_ENV)
        if override:
            config.paths.output_root = override
        return config

    @classmethod
    def write_resolved(cls, directory: str | Path, config: Optional[RunConfig] = None) -> Path:
        """Write the resolved config next to a command's outputs."""
        config = config or cls.run_config()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / RESOLVED_CONFIG_NAME
        with target.open("w", encoding="utf-8") as f:
            json.dump(config.to_dict(), f, indent=4, ensure_ascii=False)
        return target

    @classmethod
    def reset(cls) -> None:
        with cls._lock:
            cls._instance = None
