"""
Frame and clip I/O.

Frames live as 8-bit lossless PNGs named ``frame_%05d.png`` inside
``<root>/<weather>/<video_id>/{clean,degraded}/``. Loaded frames are float32
RGB in [0, 1].
"""

import logging
import re
from collections import OrderedDict
from pathlib import Path
from typing import List, Optional, Tuple

import cv2
import numpy as np

from viws.data.types import DatasetManifest, ManifestEntry, VideoClip
from viws.errors import ConfigurationError, RangeError, ShapeError

logger = logging.getLogger(__name__)

FRAME_PATTERN = "frame_{:05d}.png"
_FRAME_RE = re.compile(r"^frame_(\d{5})\.png$")
SPATIAL_MULTIPLE = 32
# decoded uint8 frames kept across clip loads
FRAME_CACHE_BYTES = 256 * 1024 * 1024


def frame_name(index: int) -> str:
    return FRAME_PATTERN.format(index)


def list_frames(directory: str | Path) -> List[Path]:
    """Return the frame files of a directory in numeric order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory {directory} not found")
    found = []
    for path in directory.iterdir():
        match = _FRAME_RE.match(path.name)
        if match:
            found.append((int(match.group(1)), path))
    found.sort()
    return [p for _, p in found]


class FrameCache:
    """Decoded 8-bit frames, least recently used first out once `max_bytes` is exceeded."""

    def __init__(self, max_bytes: int = FRAME_CACHE_BYTES):
        self.max_bytes = max_bytes
        self.nbytes = 0
        self._frames: OrderedDict[str, np.ndarray] = OrderedDict()

    def __len__(self) -> int:
        return len(self._frames)

    def read(self, path: str) -> np.ndarray:
        frame = self._frames.get(path)
        if frame is not None:
            self._frames.move_to_end(path)
            return frame
        image = cv2.imread(path, cv2.IMREAD_COLOR)
        if image is None:
            raise FileNotFoundError(f"cannot read frame {path}")
        frame = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)
        frame.setflags(write=False)
        if frame.nbytes <= self.max_bytes:
            self._frames[path] = frame
            self.nbytes += frame.nbytes
            while self.nbytes > self.max_bytes:
                _, evicted = self._frames.popitem(last=False)
                self.nbytes -= evicted.nbytes
        return frame

    def clear(self) -> None:
        self._frames.clear()
        self.nbytes = 0


_frame_cache = FrameCache()


def load_frame(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing frame file {path}")
    return _frame_cache.read(str(path)).astype(np.float32) / 255.0


def quantize(frame: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and round half up to 8 bits."""
    return np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_frame(path: str | Path, frame: np.ndarray) -> None:
    if frame.ndim != 3 or frame.shape[-1] != 3:
        raise ShapeError(f"frame must be (H, W, 3), got {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise ValueError(f"frame for {path} contains non-finite values")
    path = Path(path)
    bgr = cv2.cvtColor(quantize(frame), cv2.COLOR_RGB2BGR)
    try:
        ok = cv2.imwrite(str(path), bgr)
    except cv2.error as e:
        raise OSError(f"cannot write frame {path}: {e}") from e
    if not ok:
        raise OSError(f"cannot write frame {path}")
    _frame_cache.clear()


def save_frames(directory: str | Path, frames: np.ndarray, start: int = 0) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        save_frame(directory / frame_name(start + i), frame)


def load_video(directory: str | Path) -> np.ndarray:
    paths = list_frames(directory)
    if not paths:
        raise FileNotFoundError(f"no frames found in {directory}")
    return np.stack([load_frame(p) for p in paths])


def pad_to_multiple(
    frames: np.ndarray, multiple: int = SPATIAL_MULTIPLE
) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Reflect-pad (T, H, W, 3) frames at the bottom/right edge."""
    h, w = frames.shape[1:3]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if not pad_h and not pad_w:
        return frames, (0, 0)
    padded = np.stack(
        [
            cv2.copyMakeBorder(f, 0, pad_h, 0, pad_w, cv2.BORDER_REFLECT_101)
            for f in frames
        ]
    )
    return padded, (pad_h, pad_w)


def load_clip(
    entry: ManifestEntry,
    center: int,
    n: int,
    degraded: bool = True,
    root: str | Path = ".",
) -> VideoClip:
    """Load the 2n+1 frames around `center` from one manifest entry."""
    if n < 0:
        raise RangeError(f"n must be >= 0, got {n}")
    if center - n < 0 or center + n >= entry.num_frames:
        raise RangeError(
            f"center {center} with n={n} is outside [0, {entry.num_frames - 1}] "
            f"for {entry.video_id}"
        )
    directory = Path(root) / (entry.degraded_dir if degraded else entry.clean_dir)
    indices = list(range(center - n, center + n + 1))
    frames = np.stack([load_frame(directory / frame_name(i)) for i in indices])
    frames, padding = pad_to_multiple(frames)
    if padding != (0, 0):
        logger.debug(f"{entry.video_id}: reflect-padded by {padding}")
    return VideoClip(
        frames=frames,
        weather=entry.weather,
        target_index=n,
        video_id=entry.video_id,
        frame_indices=indices,
        padding=padding,
    )


def _crop_window(
    height: int, width: int, size: int, seed: int, flip: bool
) -> Tuple[int, int, bool]:
    if size > min(height, width):
        raise RangeError(f"crop size {size} exceeds frame size {height}x{width}")
    if size % SPATIAL_MULTIPLE:
        raise RangeError(f"crop size {size} is not divisible by {SPATIAL_MULTIPLE}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, height - size + 1))
    left = int(rng.integers(0, width - size + 1))
    mirrored = bool(flip and rng.random() < 0.5)
    return top, left, mirrored


def _apply_window(clip: VideoClip, top: int, left: int, size: int, mirrored: bool):
    height, width = clip.frames.shape[1:3]
    pad_h, pad_w = clip.padding
    # padded rows/columns that fall inside the window; a mirror moves the columns to the left edge
    padding = (
        max(0, top + size - (height - pad_h)),
        max(0, left + size - (width - pad_w)),
    )
    frames = clip.frames[:, top : top + size, left : left + size]
    if mirrored:
        frames = frames[:, :, ::-1]
    return VideoClip(
        frames=np.ascontiguousarray(frames),
        weather=clip.weather,
        target_index=clip.target_index,
        video_id=clip.video_id,
        frame_indices=list(clip.frame_indices),
        padding=padding,
    )


def crop_and_augment(
    clip: VideoClip,
    size: int,
    seed: int,
    flip: bool = False,
    paired: Optional[VideoClip] = None,
):
    """
    Crop the same window (and apply the same flip) to every frame.

    When `paired` is given (the clean counterpart of a degraded clip) it gets
    the identical window and a tuple (clip, paired) is returned.
    """
    h, w = clip.frames.shape[1:3]
    top, left, mirrored = _crop_window(h, w, size, seed, flip)
    cropped = _apply_window(clip, top, left, size, mirrored)
    if paired is None:
        return cropped
    if paired.frames.shape != clip.frames.shape:
        raise ShapeError("paired clips must share one shape")
    return cropped, _apply_window(paired, top, left, size, mirrored)


def verify_manifest(manifest: DatasetManifest) -> None:
    """Check that every listed directory holds the expected frame count."""
    train = {e.video_id for e in manifest.split("train")}
    test = {e.video_id for e in manifest.split("test")}
    if train & test:
        raise ConfigurationError(f"videos in both splits: {sorted(train & test)}")
    for entry in manifest.entries:
        for rel in (entry.clean_dir, entry.degraded_dir):
            frames = list_frames(manifest.resolve(rel))
            expected = [frame_name(i) for i in range(entry.num_frames)]
            if [p.name for p in frames] != expected:
                raise ConfigurationError(
                    f"{manifest.resolve(rel)} does not hold frames 0..{entry.num_frames - 1}"
                )
