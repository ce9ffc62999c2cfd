"""Procedural clean videos used as the source pool when no real footage is around."""

import logging
from pathlib import Path
from typing import List

import cv2
import numpy as np
from tqdm import tqdm

from viws.data.io import save_frames

logger = logging.getLogger(__name__)


def _canvas(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    coarse = rng.uniform(0.15, 0.85, size=(5, 7, 3)).astype(np.float32)
    canvas = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    freq = rng.uniform(0.05, 0.2)
    theta = rng.uniform(0, np.pi)
    stripes = 0.08 * np.sin(freq * (xx * np.cos(theta) + yy * np.sin(theta)))
    canvas += stripes[..., None]

    for _ in range(int(rng.integers(6, 14))):
        color = tuple(float(c) for c in rng.uniform(0.05, 0.95, size=3))
        x, y = int(rng.integers(0, width)), int(rng.integers(0, height))
        if rng.random() < 0.5:
            w, h = int(rng.integers(4, width // 4)), int(rng.integers(4, height // 3))
            cv2.rectangle(canvas, (x, y), (x + w, y + h), color, thickness=-1)
        else:
            cv2.circle(canvas, (x, y), int(rng.integers(3, height // 5)), color, thickness=-1)
    canvas = cv2.GaussianBlur(canvas, (0, 0), sigmaX=0.7)
    return np.clip(canvas, 0.0, 1.0)


def render_scene(
    seed: int, height: int, width: int, num_frames: int
) -> np.ndarray:
    """A (T, H, W, 3) clip seen through a camera window panning over a canvas."""
    rng = np.random.default_rng(seed)
    vx, vy = int(rng.integers(-2, 3)), int(rng.integers(-1, 2))
    margin_x = abs(vx) * num_frames + 2
    margin_y = abs(vy) * num_frames + 2
    canvas = _canvas(rng, height + margin_y, width + margin_x)
    x0 = 0 if vx >= 0 else margin_x - 1
    y0 = 0 if vy >= 0 else margin_y - 1
    frames = [
        canvas[y0 + vy * k : y0 + vy * k + height, x0 + vx * k : x0 + vx * k + width]
        for k in range(num_frames)
    ]
    return np.stack(frames).astype(np.float32)


def generate_clean_videos(
    root: str | Path,
    count: int,
    height: int,
    width: int,
    num_frames: int,
    seed: int,
) -> List[Path]:
    root = Path(root)
    directories = []
    for i in tqdm(range(count), desc="clean sources"):
        directory = root / f"scene_{i:03d}"
        save_frames(directory, render_scene(seed * 1000 + i, height, width, num_frames))
        directories.append(directory)
    logger.info(f"rendered {count} clean source videos into {root}")
    return directories
