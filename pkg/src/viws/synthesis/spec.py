"""Per-video degradation parameters and the particle records drawn from them."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from viws.data.types import WeatherLabel
from viws.errors import ParameterError

Range = Tuple[float, float]

SPEC_FILE = "weather_spec.json"
PARTICLE_FILE = "particles.json"

# bounds from which each video draws its own sub-distribution
_SAMPLING_BOUNDS: Dict[WeatherLabel, Dict[str, Range]] = {
    WeatherLabel.snow: {
        "density": (6000.0, 16000.0),
        "size": (1.0, 5.0),
        "transparency": (0.4, 1.0),
        "blur": (0.3, 1.5),
        "dx": (-1.5, 1.5),
        "dy": (1.0, 3.5),
    },
    WeatherLabel.rain: {
        "density": (1500.0, 4000.0),
        "size": (8.0, 24.0),
        "transparency": (0.25, 0.75),
        "blur": (0.4, 1.0),
        "dx": (-3.0, 3.0),
        "dy": (6.0, 12.0),
    },
    WeatherLabel.haze: {
        "density": (0.8, 2.2),
        "airlight": (0.7, 0.95),
        "dx": (-0.4, 0.4),
        "dy": (-0.1, 0.1),
    },
}


@dataclass
class WeatherSpec:
    weather: WeatherLabel
    seed: int
    # particles (snow) or streaks (rain) per megapixel, or haze strength beta
    density: float = 0.0
    size_range: Range = (1.0, 1.0)
    transparency_range: Range = (1.0, 1.0)
    blur_sigma_range: Range = (0.0, 0.0)
    motion: Tuple[float, float] = (0.0, 0.0)
    airlight: float = 0.8
    depth_noise: float = 0.1

    def __post_init__(self):
        self.weather = WeatherLabel.parse(self.weather)
        self.size_range = tuple(self.size_range)
        self.transparency_range = tuple(self.transparency_range)
        self.blur_sigma_range = tuple(self.blur_sigma_range)
        self.motion = tuple(self.motion)
        self.validate()

    def validate(self) -> None:
        values = [
            self.density,
            *self.size_range,
            *self.transparency_range,
            *self.blur_sigma_range,
            *self.motion,
            self.airlight,
            self.depth_noise,
        ]
        if not all(math.isfinite(v) for v in values):
            raise ParameterError(f"non-finite value in {self}")
        if self.density < 0:
            name = "beta" if self.weather == WeatherLabel.haze else "density"
            raise ParameterError(f"{name} must be >= 0, got {self.density}")
        for name in ("size_range", "transparency_range", "blur_sigma_range"):
            low, high = getattr(self, name)
            if low > high or low < 0:
                raise ParameterError(f"{name} must satisfy 0 <= low <= high, got {(low, high)}")
        if self.transparency_range[1] > 1:
            raise ParameterError("transparency_range must lie in [0, 1]")
        if not 0 <= self.airlight <= 1:
            raise ParameterError(f"airlight must lie in [0, 1], got {self.airlight}")

    @property
    def beta(self) -> float:
        return self.density

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["weather"] = self.weather.name
        return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}

    @classmethod
    def from_dict(cls, data: Dict) -> WeatherSpec:
        return cls(**data)

    def save(self, directory: str | Path) -> None:
        with (Path(directory) / SPEC_FILE).open("w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory: str | Path) -> WeatherSpec:
        with (Path(directory) / SPEC_FILE).open("r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _sub_range(rng: np.random.Generator, bounds: Range) -> Range:
    a, b = sorted(rng.uniform(bounds[0], bounds[1], size=2))
    return float(a), float(b)


def sample_weather_spec(weather: WeatherLabel | str, seed: int) -> WeatherSpec:
    """Draw one video's degradation distribution."""
    weather = WeatherLabel.parse(weather)
    bounds = _SAMPLING_BOUNDS[weather]
    rng = np.random.default_rng(seed)
    motion = (float(rng.uniform(*bounds["dx"])), float(rng.uniform(*bounds["dy"])))
    if weather == WeatherLabel.haze:
        return WeatherSpec(
            weather=weather,
            seed=seed,
            density=float(rng.uniform(*bounds["density"])),
            motion=motion,
            airlight=float(rng.uniform(*bounds["airlight"])),
        )
    return WeatherSpec(
        weather=weather,
        seed=seed,
        density=float(rng.uniform(*bounds["density"])),
        size_range=_sub_range(rng, bounds["size"]),
        transparency_range=_sub_range(rng, bounds["transparency"]),
        blur_sigma_range=_sub_range(rng, bounds["blur"]),
        motion=motion,
    )


@dataclass
class Particle:
    x: float
    y: float
    size: float
    alpha: float
    blur_sigma: float
    birth_frame: int
    vx: float
    vy: float

    def position_at(self, frame: int, width: int, height: int) -> Tuple[float, float]:
        # particles wrap around the frame borders instead of dying
        age = frame - self.birth_frame
        return (self.x + self.vx * age) % width, (self.y + self.vy * age) % height


@dataclass
class ParticleField:
    width: int
    height: int
    particles: List[Particle] = field(default_factory=list)

    @classmethod
    def sample(cls, spec: WeatherSpec, height: int, width: int) -> ParticleField:
        """All particles of one video, drawn from the video's distribution."""
        rng = np.random.default_rng(spec.seed)
        count = int(round(spec.density * height * width / 1e6))
        particles = []
        for _ in range(count):
            speed = rng.uniform(0.8, 1.2)
            particles.append(
                Particle(
                    x=float(rng.uniform(0, width)),
                    y=float(rng.uniform(0, height)),
                    size=float(rng.uniform(*spec.size_range)),
                    alpha=float(rng.uniform(*spec.transparency_range)),
                    blur_sigma=float(rng.uniform(*spec.blur_sigma_range)),
                    birth_frame=0,
                    vx=float(spec.motion[0] * speed),
                    vy=float(spec.motion[1] * speed),
                )
            )
        return cls(width=width, height=height, particles=particles)

    def positions(self, frame: int) -> np.ndarray:
        return np.array(
            [p.position_at(frame, self.width, self.height) for p in self.particles],
            dtype=np.float64,
        ).reshape(-1, 2)

    def save(self, directory: str | Path) -> None:
        with (Path(directory) / PARTICLE_FILE).open("w", encoding="utf-8") as f:
            json.dump(
                {
                    "width": self.width,
                    "height": self.height,
                    "particles": [asdict(p) for p in self.particles],
                },
                f,
            )

    @classmethod
    def load(cls, directory: str | Path) -> ParticleField:
        with (Path(directory) / PARTICLE_FILE).open("r", encoding="utf-8") as f:
            data = json.load(f)
        return cls(
            width=data["width"],
            height=data["height"],
            particles=[Particle(**p) for p in data["particles"]],
        )
