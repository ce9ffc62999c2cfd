"""
Rain, haze and snow degradations for clean (T, H, W, 3) videos.

Every generator is a pure function of the clean frames and a WeatherSpec: the
same inputs always give the same output, and zero intensity returns the clean
video unchanged.
"""

import logging
import math
from typing import Tuple

import cv2
import numpy as np

from viws.data.types import WeatherLabel
from viws.errors import ParameterError, ShapeError
from viws.synthesis.spec import Particle, ParticleField, WeatherSpec

logger = logging.getLogger(__name__)

MIN_DEPTH = 0.05
_MIN_SIGMA = 1e-3


def _check_frames(clean: np.ndarray) -> None:
    if clean.ndim != 4 or clean.shape[-1] != 3:
        raise ShapeError(f"expected (T, H, W, 3) frames, got {clean.shape}")


def _check_weather(spec: WeatherSpec, weather: WeatherLabel) -> None:
    if spec.weather != weather:
        raise ParameterError(f"spec is for {spec.weather.name}, not {weather.name}")


def _half_extent(reach: float, height: int, width: int) -> int:
    return max(0, min(int(math.ceil(reach)) + 1, (min(height, width) - 1) // 2))


def _stamp(layer: np.ndarray, patch: np.ndarray, y0: int, x0: int, mode: str) -> None:
    """Composite a patch into a layer with toroidal wrap-around."""
    height, width = layer.shape
    rows = (np.arange(patch.shape[0]) + y0) % height
    cols = (np.arange(patch.shape[1]) + x0) % width
    index = np.ix_(rows, cols)
    region = layer[index]
    if mode == "over":
        layer[index] = 1.0 - (1.0 - region) * (1.0 - patch)
    else:
        layer[index] = np.maximum(region, patch)


def _blur(patch: np.ndarray, sigma: float) -> np.ndarray:
    if sigma < _MIN_SIGMA:
        return patch
    return cv2.GaussianBlur(patch, (0, 0), sigmaX=sigma, sigmaY=sigma)


def _disk_patch(particle: Particle, cx: float, cy: float, half: int) -> Tuple[np.ndarray, int, int]:
    x0 = int(round(cx)) - half
    y0 = int(round(cy)) - half
    offsets = np.arange(2 * half + 1, dtype=np.float64)
    dx = offsets[None, :] + x0 - cx
    dy = offsets[:, None] + y0 - cy
    radius = particle.size / 2.0
    # anti-aliased disk: full coverage inside radius, linear falloff over one pixel
    coverage = np.clip(radius + 0.5 - np.hypot(dx, dy), 0.0, 1.0)
    mask = _blur(coverage.astype(np.float32), particle.blur_sigma)
    return particle.alpha * mask, y0, x0


def snow_alpha(field: ParticleField, frame: int) -> np.ndarray:
    alpha = np.zeros((field.height, field.width), dtype=np.float32)
    for particle, (cx, cy) in zip(field.particles, field.positions(frame)):
        half = _half_extent(
            particle.size / 2.0 + 3.0 * particle.blur_sigma, field.height, field.width
        )
        patch, y0, x0 = _disk_patch(particle, cx, cy, half)
        _stamp(alpha, patch, y0, x0, "over")
    return alpha


def composite_white(clean: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """out = (1 - a) * clean + a, never darker than clean."""
    a = alpha[..., None]
    out = np.maximum(clean, (1.0 - a) * clean + a)
    return np.clip(out, 0.0, 1.0).astype(clean.dtype)


def render_snow(clean: np.ndarray, spec: WeatherSpec) -> Tuple[np.ndarray, ParticleField]:
    _check_frames(clean)
    _check_weather(spec, WeatherLabel.snow)
    height, width = clean.shape[1:3]
    field = ParticleField.sample(spec, height, width)
    if not field.particles:
        return clean.copy(), field
    out = np.stack(
        [composite_white(frame, snow_alpha(field, k)) for k, frame in enumerate(clean)]
    )
    return out, field


def synth_snow(clean: np.ndarray, spec: WeatherSpec) -> np.ndarray:
    return render_snow(clean, spec)[0]


def screen_blend(clean: np.ndarray, layer: np.ndarray) -> np.ndarray:
    """out = 1 - (1 - clean) * (1 - S)."""
    s = np.clip(layer, 0.0, 1.0)[..., None]
    return np.clip(1.0 - (1.0 - clean) * (1.0 - s), 0.0, 1.0).astype(clean.dtype)


def _streak_patch(particle: Particle, cx: float, cy: float, half: int) -> Tuple[np.ndarray, int, int]:
    size = 2 * half + 1
    patch = np.zeros((size, size), dtype=np.float32)
    angle = math.atan2(particle.vy, particle.vx) if (particle.vx or particle.vy) else math.pi / 2
    x0 = int(round(cx)) - half
    y0 = int(round(cy)) - half
    # line endpoints in patch coordinates, 4 fractional bits for cv2.line
    px, py = cx - x0, cy - y0
    reach = particle.size / 2.0
    ex, ey = reach * math.cos(angle), reach * math.sin(angle)
    scale = 16
    p1 = (int(round((px - ex) * scale)), int(round((py - ey) * scale)))
    p2 = (int(round((px + ex) * scale)), int(round((py + ey) * scale)))
    cv2.line(patch, p1, p2, color=1.0, thickness=1, lineType=cv2.LINE_8, shift=4)
    blurred = _blur(patch, particle.blur_sigma)
    peak = float(blurred.max())
    if peak > 0:
        blurred = blurred / peak
    return particle.alpha * blurred, y0, x0


def rain_layer(field: ParticleField, frame: int) -> np.ndarray:
    layer = np.zeros((field.height, field.width), dtype=np.float32)
    for particle, (cx, cy) in zip(field.particles, field.positions(frame)):
        half = _half_extent(
            particle.size / 2.0 + 3.0 * particle.blur_sigma, field.height, field.width
        )
        patch, y0, x0 = _streak_patch(particle, cx, cy, half)
        _stamp(layer, patch, y0, x0, "max")
    return layer


def render_rain(clean: np.ndarray, spec: WeatherSpec) -> Tuple[np.ndarray, ParticleField]:
    _check_frames(clean)
    _check_weather(spec, WeatherLabel.rain)
    height, width = clean.shape[1:3]
    field = ParticleField.sample(spec, height, width)
    if not field.particles:
        return clean.copy(), field
    out = np.stack(
        [screen_blend(frame, rain_layer(field, k)) for k, frame in enumerate(clean)]
    )
    return out, field


def synth_rain(clean: np.ndarray, spec: WeatherSpec) -> np.ndarray:
    return render_rain(clean, spec)[0]


def atmospheric_scattering(
    clean: np.ndarray, depth: np.ndarray, beta: float, airlight: float
) -> np.ndarray:
    """out = t * clean + (1 - t) * A with t = exp(-beta * depth)."""
    if beta < 0:
        raise ParameterError(f"haze beta must be >= 0, got {beta}")
    t = np.exp(-beta * np.asarray(depth, dtype=np.float64))
    if t.ndim == 2:
        t = t[..., None]
    return t * clean + (1.0 - t) * airlight


def haze_depth(spec: WeatherSpec, height: int, width: int, frame: int = 0) -> np.ndarray:
    """Vertical ramp (far at the top) plus drifting low-frequency noise."""
    rng = np.random.default_rng(spec.seed)
    ramp = np.linspace(1.0, 0.2, height, dtype=np.float64)[:, None].repeat(width, axis=1)
    coarse = rng.uniform(-1.0, 1.0, size=(4, 6)).astype(np.float32)
    noise = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
    if frame:
        shift = np.float32(
            [[1, 0, spec.motion[0] * frame], [0, 1, spec.motion[1] * frame]]
        )
        noise = cv2.warpAffine(
            noise, shift, (width, height), flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_REFLECT_101,
        )
    depth = ramp + spec.depth_noise * noise.astype(np.float64)
    return np.clip(depth, MIN_DEPTH, 1.0)


def synth_haze(clean: np.ndarray, spec: WeatherSpec) -> np.ndarray:
    _check_frames(clean)
    _check_weather(spec, WeatherLabel.haze)
    if spec.beta < 0:
        raise ParameterError(f"haze beta must be >= 0, got {spec.beta}")
    if spec.beta == 0:
        return clean.copy()
    height, width = clean.shape[1:3]
    out = [
        atmospheric_scattering(frame, haze_depth(spec, height, width, k), spec.beta, spec.airlight)
        for k, frame in enumerate(clean)
    ]
    return np.clip(np.stack(out), 0.0, 1.0).astype(clean.dtype)


SYNTHESIZERS = {
    WeatherLabel.rain: render_rain,
    WeatherLabel.snow: render_snow,
}


def degrade(clean: np.ndarray, spec: WeatherSpec) -> Tuple[np.ndarray, ParticleField | None]:
    """Apply the WeatherSpec's weather; returns the degraded frames and any particle records."""
    if spec.weather == WeatherLabel.haze:
        return synth_haze(clean, spec), None
    return SYNTHESIZERS[spec.weather](clean, spec)
