"""
Paired clean/degraded dataset construction.

Each selected clean source video receives its own WeatherSpec (seeded from the
global seed and the video id), the degraded frames are rendered and written
next to a copy of the clean frames, and a manifest with disjoint train/test
splits is produced. The mixed training set is the union of the per-weather
training sets.
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping

import numpy as np
from tqdm import tqdm

from viws.data.io import list_frames, load_video, save_frames
from viws.data.types import DatasetManifest, ManifestEntry, WeatherLabel
from viws.errors import ConfigurationError
from viws.synthesis.spec import WeatherSpec, sample_weather_spec
from viws.synthesis.weather import degrade
from viws.utils import cache
from viws.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class BuildReport:
    manifest: DatasetManifest
    generated: int = 0
    reused: int = 0

    @property
    def up_to_date(self) -> bool:
        return self.generated == 0 and self.reused > 0


def find_source_videos(clean_root: str | Path) -> List[Path]:
    clean_root = Path(clean_root)
    if not clean_root.is_dir():
        raise FileNotFoundError(f"clean source root {clean_root} not found")
    return sorted(d for d in clean_root.iterdir() if d.is_dir() and list_frames(d))


def directory_digest(*directories: Path) -> str:
    sha = hashlib.sha256()
    for directory in directories:
        for path in list_frames(directory):
            sha.update(path.name.encode("utf-8"))
            sha.update(path.read_bytes())
    return sha.hexdigest()


def split_counts(count: int, split_ratio: float) -> tuple[int, int]:
    n_train = int(round(count * split_ratio))
    n_train = min(max(n_train, 1), count)
    if count > 1 and n_train == count:
        n_train = count - 1
    return n_train, count - n_train


class DatasetBuilder:
    def __init__(
        self,
        clean_root: str | Path,
        out_root: str | Path,
        per_weather_counts: Mapping[str, int],
        split_ratio: float,
        global_seed: int,
    ):
        self.clean_root = Path(clean_root)
        self.out_root = Path(out_root)
        self.counts = {WeatherLabel.parse(k): int(v) for k, v in per_weather_counts.items()}
        self.split_ratio = split_ratio
        self.global_seed = global_seed
        if any(c < 1 for c in self.counts.values()):
            raise ConfigurationError(f"per-weather counts must be >= 1, got {per_weather_counts}")
        if not 0 < split_ratio <= 1:
            raise ConfigurationError(f"split_ratio must lie in (0, 1], got {split_ratio}")

    def run(self) -> BuildReport:
        sources = find_source_videos(self.clean_root)
        for weather, count in self.counts.items():
            if count > len(sources):
                raise ConfigurationError(
                    f"{weather.name} needs {count} source videos, "
                    f"only {len(sources)} found in {self.clean_root}"
                )
        cache.init_db(self.out_root)
        store = cache.SynthesisCache()
        report = BuildReport(manifest=DatasetManifest(root=str(self.out_root)))
        entries: List[ManifestEntry] = []
        try:
            for weather in sorted(self.counts):
                entries.extend(self._build_weather(weather, sources, store, report))
        finally:
            cache.close_db()
        report.manifest = DatasetManifest(entries, root=str(self.out_root))
        report.manifest.save(self.out_root / MANIFEST_NAME)
        for weather in self.counts:
            DatasetManifest(
                [e for e in entries if e.weather == weather], root=str(self.out_root)
            ).save(self.out_root / f"manifest_{weather.name}.json")
        logger.info(
            f"dataset at {self.out_root}: {len(entries)} videos "
            f"({report.generated} generated, {report.reused} up-to-date)"
        )
        return report

    def _build_weather(self, weather, sources, store, report) -> List[ManifestEntry]:
        count = self.counts[weather]
        rng = np.random.default_rng(derive_seed(self.global_seed, weather.name))
        chosen = [sources[i] for i in rng.permutation(len(sources))[:count]]
        n_train, _ = split_counts(count, self.split_ratio)
        entries = []
        for i, source in enumerate(tqdm(chosen, desc=f"synthesize {weather.name}")):
            video_id = f"{weather.name}_{i:03d}"
            split = "train" if i < n_train else "test"
            entries.append(self._build_video(video_id, weather, source, split, store, report))
        return entries

    def _build_video(self, video_id, weather, source, split, store, report) -> ManifestEntry:
        video_dir = self.out_root / weather.name / video_id
        clean_dir, degraded_dir = video_dir / "clean", video_dir / "degraded"
        spec = sample_weather_spec(weather, derive_seed(self.global_seed, video_id))
        params = {"spec": spec.to_dict(), "source": source.name, "source_digest": directory_digest(source)}
        num_frames = len(list_frames(source))

        cached = store.get(video_id, params)
        if cached is not None and degraded_dir.is_dir() and clean_dir.is_dir():
            if directory_digest(clean_dir, degraded_dir) == cached:
                logger.debug(f"{video_id}: up-to-date")
                report.reused += 1
                return self._entry(video_id, weather, clean_dir, degraded_dir, num_frames, split)

        clean = load_video(source)
        degraded, field = degrade(clean, spec)
        save_frames(clean_dir, clean)
        save_frames(degraded_dir, degraded)
        spec.save(video_dir)
        if field is not None:
            field.save(video_dir)
        store.set(video_id, params, directory_digest(clean_dir, degraded_dir))
        report.generated += 1
        return self._entry(video_id, weather, clean_dir, degraded_dir, num_frames, split)

    def _entry(self, video_id, weather, clean_dir, degraded_dir, num_frames, split):
        return ManifestEntry(
            video_id=video_id,
            weather=weather,
            clean_dir=clean_dir.relative_to(self.out_root).as_posix(),
            degraded_dir=degraded_dir.relative_to(self.out_root).as_posix(),
            num_frames=num_frames,
            split=split,
        )


def build_dataset(
    clean_root: str | Path,
    out_root: str | Path,
    per_weather_counts: Mapping[str, int],
    split_ratio: float,
    global_seed: int,
) -> DatasetManifest:
    return DatasetBuilder(
        clean_root, out_root, per_weather_counts, split_ratio, global_seed
    ).run().manifest


def load_spec(manifest: DatasetManifest, entry: ManifestEntry) -> WeatherSpec:
    """The WeatherSpec stored beside a video, for audits and recomputation."""
    return WeatherSpec.load(manifest.resolve(entry.degraded_dir).parent)


def split_summary(manifest: DatasetManifest) -> Dict[str, Dict[str, int]]:
    summary = {w.name: {"train": 0, "test": 0} for w in WeatherLabel}
    for entry in manifest.entries:
        summary[entry.weather.name][entry.split] += 1
    return summary
