"""Clip value types, frame I/O and dataset manifests."""

from .io import (
    crop_and_augment,
    frame_name,
    list_frames,
    load_clip,
    load_frame,
    load_video,
    save_frame,
    save_frames,
    verify_manifest,
)
from .types import (
    NUM_WEATHERS,
    DatasetManifest,
    FramePair,
    ManifestEntry,
    VideoClip,
    WeatherLabel,
)

__all__ = [
    "NUM_WEATHERS",
    "DatasetManifest",
    "FramePair",
    "ManifestEntry",
    "VideoClip",
    "WeatherLabel",
    "crop_and_augment",
    "frame_name",
    "list_frames",
    "load_clip",
    "load_frame",
    "load_video",
    "save_frame",
    "save_frames",
    "verify_manifest",
]
