"""
Per-frame PSNR/SSIM collection, per-weather summaries and their tables.

The Average of a summary is the mean of the per-weather means, not a mean
over pooled frames.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from viws.data.io import list_frames, load_frame
from viws.data.types import DatasetManifest, FramePair, WeatherLabel
from viws.errors import EvaluationError
from viws.objectives.metrics import psnr, ssim

logger = logging.getLogger(__name__)

CSV_FIELDS = ("video_id", "frame_idx", "psnr", "ssim", "weather", "padded")


@dataclass
class FrameMetrics:
    video_id: str
    frame_idx: int
    psnr: float
    ssim: float
    weather: str
    padded: bool = False


def weather_summary(
    rows: Iterable[FrameMetrics], weathers: Sequence[WeatherLabel] = tuple(WeatherLabel)
) -> Dict[str, Dict[str, float]]:
    """{weather: {psnr, ssim, frames}} plus an "Average" entry over the weathers."""
    rows = list(rows)
    summary: Dict[str, Dict[str, float]] = {}
    for weather in weathers:
        selected = [r for r in rows if r.weather == weather.name]
        if not selected:
            raise EvaluationError(f"no evaluated frames for weather {weather.name}")
        summary[weather.name] = {
            "psnr": _finite_mean([r.psnr for r in selected]),
            "ssim": float(np.mean([r.ssim for r in selected])),
            "frames": len(selected),
        }
    summary["Average"] = {
        "psnr": _finite_mean([summary[w.name]["psnr"] for w in weathers]),
        "ssim": float(np.mean([summary[w.name]["ssim"] for w in weathers])),
        "frames": sum(summary[w.name]["frames"] for w in weathers),
    }
    return summary


def _finite_mean(values: List[float]) -> float:
    """Mean PSNR; any infinite (lossless) entry makes the mean infinite."""
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(np.mean(values))


def summary_table(summary: Dict[str, Dict[str, float]], title: str = "PSNR / SSIM") -> Table:
    table = Table(title=title)
    table.add_column("")
    columns = [k for k in summary if k != "Average"] + ["Average"]
    for column in columns:
        table.add_column(column.capitalize() if column != "Average" else column, justify="right")
    table.add_row("PSNR", *[_format_psnr(summary[c]["psnr"]) for c in columns])
    table.add_row("SSIM", *[f"{summary[c]['ssim']:.4f}" for c in columns])
    return table


def _format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def print_summary(summary: Dict[str, Dict[str, float]], title: str = "PSNR / SSIM") -> None:
    Console().print(summary_table(summary, title))


def _collect_pairs(pred_dir: Path, gt_dir: Path) -> List[str]:
    pred_names = {p.name for p in list_frames(pred_dir)}
    gt_names = [p.name for p in list_frames(gt_dir)]
    missing = [name for name in gt_names if name not in pred_names]
    extra = sorted(pred_names - set(gt_names))
    if missing or extra:
        raise EvaluationError(
            f"{pred_dir} does not match {gt_dir}: missing {missing or 'none'}, unexpected {extra or 'none'}"
        )
    return gt_names


def evaluate_video(
    pred_dir: Path,
    gt_dir: Path,
    video_id: str,
    weather: WeatherLabel,
    padded_frames: Optional[Sequence[int]] = None,
) -> List[FrameMetrics]:
    padded = set(padded_frames or ())
    rows = []
    for idx, name in enumerate(_collect_pairs(pred_dir, gt_dir)):
        pair = FramePair(load_frame(pred_dir / name), load_frame(gt_dir / name))
        rows.append(FrameMetrics(video_id, idx, psnr(pair), ssim(pair), weather.name, idx in padded))
    return rows


def padded_indices(num_frames: int, n: int) -> List[int]:
    """Frames whose restoration window needed edge replication."""
    return [i for i in range(num_frames) if i < n or i > num_frames - 1 - n]


def evaluate_manifest(
    manifest: DatasetManifest, pred_root: str | Path, n: int, split: str = "test"
) -> List[FrameMetrics]:
    """Score <pred_root>/<weather>/<video_id>/ against each entry's clean frames."""
    pred_root = Path(pred_root)
    entries = manifest.split(split)
    if not entries:
        raise EvaluationError(f"manifest has no {split} videos to evaluate")
    rows = []
    for entry in tqdm(entries, desc="evaluate"):
        pred_dir = pred_root / entry.weather.name / entry.video_id
        if not pred_dir.is_dir():
            raise EvaluationError(f"no restored frames for {entry.video_id} at {pred_dir}")
        rows.extend(
            evaluate_video(
                pred_dir,
                manifest.resolve(entry.clean_dir),
                entry.video_id,
                entry.weather,
                padded_indices(entry.num_frames, n),
            )
        )
    return rows


def write_csv(rows: Iterable[FrameMetrics], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))
    return path


def write_summary(summary: Dict[str, Dict[str, float]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    serializable = {
        k: {m: ("inf" if isinstance(v, float) and math.isinf(v) else v) for m, v in metrics.items()}
        for k, metrics in summary.items()
    }
    with path.open("w", encoding="utf-8") as f:
        json.dump(serializable, f, indent=2)
    return path
