"""Synthetic rain/haze/snow video generation."""

from .dataset import BuildReport, DatasetBuilder, build_dataset, split_summary
from .scenes import generate_clean_videos, render_scene
from .spec import Particle, ParticleField, WeatherSpec, sample_weather_spec
from .weather import (
    atmospheric_scattering,
    composite_white,
    degrade,
    screen_blend,
    synth_haze,
    synth_rain,
    synth_snow,
)

__all__ = [
    "BuildReport",
    "DatasetBuilder",
    "build_dataset",
    "split_summary",
    "generate_clean_videos",
    "render_scene",
    "Particle",
    "ParticleField",
    "WeatherSpec",
    "sample_weather_spec",
    "atmospheric_scattering",
    "composite_white",
    "degrade",
    "screen_blend",
    "synth_haze",
    "synth_rain",
    "synth_snow",
]
