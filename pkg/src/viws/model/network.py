"""The assembled restoration network and its parameter audit."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import torch
import torch.nn as nn

from viws.config import ModelConfig
from viws.errors import ShapeError
from viws.model.adversarial import WeatherDiscriminator
from viws.model.decoder import DecoderOutput, RefineNet, VideoDecoder
from viws.model.encoder import EncoderOutput, VideoEncoder
from viws.model.messenger import MessengerBank

logger = logging.getLogger(__name__)


@dataclass
class NetworkOutput:
    restored: torch.Tensor  # (B, 3, H, W)
    initial: torch.Tensor  # (B, 3, H, W), before refinement
    decoded: DecoderOutput
    encoded: EncoderOutput
    logits: Optional[torch.Tensor] = None  # (B, Q)
    alpha: Optional[torch.Tensor] = None  # (B, T)


class ViWSNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        enc = config.encoder
        if config.use_messengers:
            self.messengers = MessengerBank(
                config.num_frames,
                config.num_messengers,
                enc.channels[0],
                seed=config.messenger_seed,
                shift_plan=config.shift_plan,
            )
        else:
            self.messengers = None
        self.encoder = VideoEncoder(
            enc,
            shift_plan=config.shift_plan,
            shift_per_block=config.shift_per_block,
            use_messengers=config.use_messengers,
        )
        self.discriminator = (
            WeatherDiscriminator(enc.channels, config.adv_taps, config.descriptor_dim, config.attention_dim)
            if config.use_adversarial
            else None
        )
        self.decoder = VideoDecoder(
            enc,
            config.decoder,
            use_retrieval=config.use_video_decoder,
            num_queries=0 if config.use_messengers else config.num_messengers,
            use_temporal_fusion=config.use_temporal_fusion,
        )
        self.refine = RefineNet(enc, config.decoder) if config.use_refine else None

    def forward(self, frames: torch.Tensor, lambda_: Optional[float] = None) -> NetworkOutput:
        """
        :param frames: degraded clip (B, T, 3, H, W) in [0, 1]
        :param lambda_: GRL scale for the discriminator; None leaves the branch out
        """
        if frames.dim() != 5 or frames.shape[1] != self.config.num_frames:
            raise ShapeError(
                f"expected (B, {self.config.num_frames}, 3, H, W) clips, got {tuple(frames.shape)}"
            )
        messengers = self.messengers(frames.shape[0]) if self.messengers is not None else None
        encoded = self.encoder(frames, messengers)
        logits = alpha = None
        if self.discriminator is not None and lambda_ is not None:
            logits, alpha = self.discriminator(encoded.features, lambda_)
        decoded = self.decoder(frames, encoded)
        restored = self.refine(decoded.fused) if self.refine is not None else decoded.fused
        return NetworkOutput(restored, decoded.fused, decoded, encoded, logits, alpha)

    @torch.no_grad()
    def restore(self, frames: torch.Tensor) -> torch.Tensor:
        return self.forward(frames).restored


def parameter_groups(model: ViWSNet) -> Dict[str, List[str]]:
    """Trainable parameter names keyed by their top-level component."""
    groups: Dict[str, List[str]] = {}
    for name, param in model.named_parameters():
        if param.requires_grad:
            groups.setdefault(name.split(".")[0], []).append(name)
    return groups


def count_parameters(module: Optional[nn.Module]) -> int:
    if module is None:
        return 0
    return sum(p.numel() for p in module.parameters())


def build_model(config: ModelConfig) -> ViWSNet:
    model = ViWSNet(config)
    logger.info(
        f"model {config.fingerprint()[:12]}: {count_parameters(model)} parameters "
        f"(refine {count_parameters(model.refine)})"
    )
    return model
