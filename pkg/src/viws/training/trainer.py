"""
End-to-end training loop.

One Adam optimizer updates every trainable parameter (messengers, encoder,
discriminator, decoder, refinement). The GRL inside the discriminator turns
the weather cross-entropy into a suppression signal for the encoder, so a
single backward pass serves both sides of the adversarial game.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from tqdm import tqdm

from viws.config import RunConfig
from viws.data.types import DatasetManifest, WeatherLabel
from viws.errors import NonFiniteLossError
from viws.evaluation import FrameMetrics, print_summary, weather_summary
from viws.model.network import build_model
from viws.objectives.losses import build_extractor, total_loss
from viws.objectives.metrics import psnr, ssim
from viws.training.batch import TrainingSample, build_batch, to_tensors, validation_clips
from viws.training.checkpoint import TrainState, checkpoint_load, checkpoint_save
from viws.training.schedule import lambda_at, lr_at
from viws.utils.seeding import derive_seed, seed_everything

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
LAST_CHECKPOINT = "last.pt"
BEST_CHECKPOINT = "best.pt"


class Trainer:
    def __init__(
        self,
        config: RunConfig,
        manifest: DatasetManifest,
        output_dir: str | Path,
        device: str = "cpu",
    ):
        config.validate()
        self.config = config
        self.train_config = config.train
        self.manifest = manifest
        self.output_dir = Path(output_dir)
        self.device = device
        self.n = config.model.n

        seed_everything(config.seed)
        model = build_model(config.model).to(device)
        optimizer = torch.optim.Adam(model.parameters(), lr=self.train_config.lr0)
        self.state = TrainState(
            model=model,
            optimizer=optimizer,
            data_rng=np.random.default_rng(derive_seed(config.seed, "data")),
        )
        self.extractor = None
        if self.train_config.loss.gamma1 > 0:
            self.extractor = build_extractor(self.train_config.perceptual).to(device)
        self._fixed_batch: Optional[List[TrainingSample]] = None
        self._validation: Optional[List[TrainingSample]] = None

    @property
    def model(self):
        return self.state.model

    @property
    def total_iterations(self) -> int:
        return self.train_config.total_iterations

    @property
    def log_path(self) -> Path:
        return self.output_dir / LOG_NAME

    def resume(self, path: str | Path) -> None:
        checkpoint_load(path, self.state)

    def next_batch(self) -> List[TrainingSample]:
        if self.train_config.overfit:
            if self._fixed_batch is None:
                rng = np.random.default_rng(derive_seed(self.config.seed, "overfit"))
                self._fixed_batch = build_batch(self.manifest, self.train_config, self.n, rng)
            return self._fixed_batch
        return build_batch(self.manifest, self.train_config, self.n, self.state.data_rng)

    def train_step(self, samples: List[TrainingSample]) -> Dict[str, float]:
        state = self.state
        lam = lambda_at(state.iteration, self.total_iterations)
        lr = lr_at(state.epoch, self.train_config)
        for group in state.optimizer.param_groups:
            group["lr"] = lr

        frames, targets, labels = to_tensors(samples, self.device)
        state.model.train()
        use_adv = state.model.discriminator is not None
        out = state.model(frames, lambda_=lam if use_adv else None)
        total, components = total_loss(
            out.restored, targets, out.logits, labels, self.train_config.loss, lam, self.extractor
        )
        if not all(math.isfinite(v) for v in components.values()):
            logger.error(f"non-finite loss at iteration {state.iteration}: {components}")
            self._dump(components)
            raise NonFiniteLossError(
                f"non-finite loss at iteration {state.iteration}", components
            )
        state.optimizer.zero_grad(set_to_none=True)
        total.backward()
        state.optimizer.step()
        state.iteration += 1

        record = {
            "iteration": state.iteration,
            "epoch": state.epoch,
            "lr": lr,
            "lambda": lam,
            **components,
        }
        self._append_log(record)
        return record

    def _append_log(self, record: Dict[str, float]) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")

    def _dump(self, components: Dict[str, float]) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        dump = {"iteration": self.state.iteration, "epoch": self.state.epoch, **components}
        path = self.output_dir / "nonfinite_dump.json"
        path.write_text(json.dumps({k: repr(v) for k, v in dump.items()}, indent=2), encoding="utf-8")
        logger.error(f"loss components dumped to {path}")

    @torch.no_grad()
    def validate(self) -> Optional[Dict[str, Dict[str, float]]]:
        if self._validation is None:
            self._validation = validation_clips(
                self.manifest, self.n, self.train_config.val_clips_per_video
            )
        if not self._validation:
            logger.warning("no held-out clips, skipping validation")
            return None
        self.model.eval()
        rows = []
        for sample in self._validation:
            frames, _, _ = to_tensors([sample], self.device)
            restored = self.model(frames).restored[0].permute(1, 2, 0).cpu().numpy()
            pad_h, pad_w = sample.degraded.padding
            h = restored.shape[0] - pad_h
            w = restored.shape[1] - pad_w
            restored, target = restored[:h, :w], sample.target[:h, :w]
            rows.append(
                FrameMetrics(
                    sample.degraded.video_id,
                    sample.degraded.frame_indices[sample.degraded.target_index],
                    psnr(restored, target),
                    ssim(restored, target),
                    sample.label.name,
                )
            )
        present = {r.weather for r in rows}
        summary = weather_summary(rows, [w for w in WeatherLabel if w.name in present])
        print_summary(summary, title=f"validation, epoch {self.state.epoch + 1}")
        return summary

    def fit(self) -> TrainState:
        state = self.state
        spe = self.train_config.steps_per_epoch
        logger.info(
            f"training {self.total_iterations} iterations "
            f"({self.train_config.epochs} epochs x {spe} steps) into {self.output_dir}"
        )
        with tqdm(total=self.total_iterations, initial=state.iteration, desc="train") as bar:
            while state.iteration < self.total_iterations:
                state.epoch = state.iteration // spe
                record = self.train_step(self.next_batch())
                bar.update(1)
                if state.iteration % self.train_config.log_every == 0:
                    logger.info(
                        f"it {state.iteration} ep {state.epoch} lr {record['lr']:.2e} "
                        f"λ {record['lambda']:.3f} total {record['total']:.5f} "
                        f"l1 {record['smooth_l1']:.5f} perc {record['perceptual']:.5f} "
                        f"adv {record['adversarial']:.4f}"
                    )
                if state.iteration % spe == 0:
                    self._end_of_epoch(state.epoch + 1)
        state.epoch = self.train_config.epochs
        checkpoint_save(self.output_dir / LAST_CHECKPOINT, state)
        return state

    def _end_of_epoch(self, finished: int) -> None:
        state = self.state
        cfg = self.train_config
        if cfg.val_every and finished % cfg.val_every == 0:
            summary = self.validate()
            if summary is not None:
                average = summary["Average"]["psnr"]
                if average > state.best_average:
                    state.best_average = average
                    checkpoint_save(self.output_dir / BEST_CHECKPOINT, state)
                    logger.info(f"new best average PSNR {average:.2f} dB at epoch {finished}")
        if cfg.checkpoint_every and finished % cfg.checkpoint_every == 0:
            checkpoint_save(self.output_dir / LAST_CHECKPOINT, state)
