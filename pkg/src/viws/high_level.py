"""Functions that can be used for the most common use-cases for viws."""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from viws.config import RunConfig
from viws.data.io import list_frames, load_video, pad_to_multiple, save_frame, verify_manifest
from viws.data.types import DatasetManifest
from viws.errors import ConfigurationError, RangeError
from viws.evaluation import evaluate_manifest, print_summary, weather_summary, write_csv, write_summary
from viws.model.network import ViWSNet, build_model
from viws.synthesis.dataset import MANIFEST_NAME, BuildReport, DatasetBuilder, find_source_videos, split_summary
from viws.synthesis.scenes import generate_clean_videos
from viws.training.checkpoint import load_model_weights
from viws.training.trainer import BEST_CHECKPOINT, LAST_CHECKPOINT, Trainer

logger = logging.getLogger(__name__)


def _has_sources(clean_root: Path) -> bool:
    try:
        return bool(find_source_videos(clean_root))
    except FileNotFoundError:
        return False


def synthesize(config: RunConfig) -> BuildReport:
    """Build the paired rain/haze/snow dataset described by config.synthesize."""
    synth = config.synthesize
    clean_root = Path(config.paths.clean_root)
    if synth.generate_sources and not _has_sources(clean_root):
        generate_clean_videos(
            clean_root, synth.source_count, synth.height, synth.width, synth.num_frames, config.seed
        )
    report = DatasetBuilder(
        clean_root, config.paths.dataset_root, synth.counts, synth.split_ratio, config.seed
    ).run()
    if report.up_to_date:
        logger.info("up-to-date, outputs identical")
    Console().print(manifest_table(report.manifest))
    return report


def manifest_table(manifest: DatasetManifest) -> Table:
    summary = split_summary(manifest)
    table = Table(title="videos per weather and split")
    table.add_column("split")
    for weather in summary:
        table.add_column(weather.capitalize(), justify="right")
    table.add_column("Total", justify="right")
    for split in ("train", "test"):
        counts = [summary[w][split] for w in summary]
        table.add_row(split, *map(str, counts), str(sum(counts)))
    return table


def load_manifest(config: RunConfig) -> DatasetManifest:
    manifest = DatasetManifest.load(Path(config.paths.dataset_root) / MANIFEST_NAME)
    verify_manifest(manifest)
    return manifest


def train(config: RunConfig, resume: Optional[str | Path] = None, device: str = "cpu") -> Trainer:
    manifest = load_manifest(config)
    trainer = Trainer(config, manifest, config.paths.output_root, device=device)
    if resume is not None:
        trainer.resume(resume)
    trainer.fit()
    return trainer


def find_checkpoint(config: RunConfig, checkpoint: Optional[str | Path] = None) -> Path:
    if checkpoint is not None:
        return Path(checkpoint)
    root = Path(config.paths.output_root)
    for name in (BEST_CHECKPOINT, LAST_CHECKPOINT):
        if (root / name).exists():
            return root / name
    raise ConfigurationError(f"no checkpoint given and none found in {root}")


def load_model(config: RunConfig, checkpoint: Optional[str | Path] = None, device: str = "cpu") -> ViWSNet:
    model = build_model(config.model)
    load_model_weights(find_checkpoint(config, checkpoint), model)
    return model.to(device).eval()


def window_indices(num_frames: int, center: int, n: int) -> List[int]:
    """Frame indices of the window around center, replicated at the clip edges."""
    return [min(max(center + k, 0), num_frames - 1) for k in range(-n, n + 1)]


def restore_video(model: ViWSNet, frames: np.ndarray, device: str = "cpu") -> np.ndarray:
    """Restore every frame of a (N, H, W, 3) video with a sliding window."""
    n = model.config.n
    num_frames = frames.shape[0]
    if num_frames < 2 * n + 1:
        raise RangeError(f"video has {num_frames} frames, at least {2 * n + 1} are needed")
    height, width = frames.shape[1:3]
    padded, _ = pad_to_multiple(frames)
    video = torch.from_numpy(np.ascontiguousarray(padded)).permute(0, 3, 1, 2).float().to(device)
    model.eval()
    restored = np.empty_like(frames, dtype=np.float32)
    for t in range(num_frames):
        clip = video[window_indices(num_frames, t, n)].unsqueeze(0)
        out = model.restore(clip)[0].permute(1, 2, 0).cpu().numpy()
        restored[t] = out[:height, :width]
    return restored


def infer_directory(
    model: ViWSNet, input_dir: str | Path, output_dir: str | Path, device: str = "cpu"
) -> List[Path]:
    """Restore one video directory; outputs keep the input filenames."""
    paths = list_frames(input_dir)
    if not paths:
        raise FileNotFoundError(f"no frames found in {input_dir}")
    restored = restore_video(model, load_video(input_dir), device)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path, frame in zip(paths, restored):
        save_frame(output_dir / path.name, frame)
        written.append(output_dir / path.name)
    return written


def infer_manifest(
    model: ViWSNet,
    manifest: DatasetManifest,
    output_root: str | Path,
    split: str = "test",
    device: str = "cpu",
) -> Dict[str, Path]:
    """Restore every video of a split into <output_root>/<weather>/<video_id>/."""
    output_root = Path(output_root)
    outputs = {}
    for entry in tqdm(manifest.split(split), desc="infer"):
        target = output_root / entry.weather.name / entry.video_id
        infer_directory(model, manifest.resolve(entry.degraded_dir), target, device)
        outputs[entry.video_id] = target
    return outputs


def restored_root(config: RunConfig) -> Path:
    if config.infer.output_dir:
        return Path(config.infer.output_dir)
    return Path(config.paths.output_root) / "restored"


def evaluate(config: RunConfig, pred_root: Optional[str | Path] = None) -> Dict[str, Dict[str, float]]:
    manifest = load_manifest(config)
    pred_root = Path(pred_root) if pred_root is not None else restored_root(config)
    rows = evaluate_manifest(manifest, pred_root, config.model.n)
    out_dir = Path(config.paths.output_root) / "evaluate"
    write_csv(rows, out_dir / config.evaluate.csv_name)
    summary = weather_summary(rows)
    write_summary(summary, out_dir / config.evaluate.summary_name)
    print_summary(summary, title=f"test metrics ({len(rows)} frames)")
    return summary


__all__ = [
    "evaluate",
    "infer_directory",
    "infer_manifest",
    "load_model",
    "restore_video",
    "synthesize",
    "train",
]
