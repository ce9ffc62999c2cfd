"""
Restoration objective: smooth L1 + perceptual (frozen VGG-16 taps) plus the
weighted weather cross-entropy of the adversarial branch.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import VGG16_Weights, vgg16
from torchvision.models.vgg import make_layers

from viws.config import LossWeights, PerceptualConfig
from viws.errors import ShapeError
from viws.model.adversarial import adversarial_loss

logger = logging.getLogger(__name__)

# relu1_2, relu2_2, relu3_3 of VGG-16
TAP_POINTS = (3, 8, 15)
_VGG16_PREFIX = [64, 64, "M", 128, 128, "M", 256, 256, 256]
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)

LOSS_COMPONENTS = ("smooth_l1", "perceptual", "adversarial", "total")


def smooth_l1(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """0.5 d^2 where |d| < 1, |d| - 0.5 elsewhere; mean over all elements."""
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} differ")
    return F.smooth_l1_loss(pred, gt, beta=1.0, reduction="mean")


class PerceptualExtractor(nn.Module):
    """Frozen VGG-16 prefix returning the feature maps at TAP_POINTS."""

    def __init__(
        self,
        pretrained: bool = False,
        normalize: bool = True,
        seed: int = 0,
        taps: Sequence[int] = TAP_POINTS,
    ):
        super().__init__()
        self.taps = tuple(taps)
        self.features = self._build(pretrained, seed)[: max(self.taps) + 1]
        self.normalize = normalize
        self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        for param in self.features.parameters():
            param.requires_grad = False
        self.eval()

    @staticmethod
    def _build(pretrained: bool, seed: int) -> nn.Sequential:
        if pretrained:
            try:
                return vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
            except Exception as e:
                logger.warning(f"pretrained VGG-16 unavailable ({e}), using seeded random weights")
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return make_layers(_VGG16_PREFIX)

    def train(self, mode: bool = True):
        # frozen: always evaluated in inference mode
        return super().train(False)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        if self.normalize:
            x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        outputs = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self.taps:
                outputs.append(x)
        return outputs


def build_extractor(config: PerceptualConfig) -> PerceptualExtractor:
    return PerceptualExtractor(config.pretrained, config.normalize, config.seed)


def perceptual_loss(pred: torch.Tensor, gt: torch.Tensor, extractor: PerceptualExtractor) -> torch.Tensor:
    """MSE between tap-point features, averaged over the taps."""
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(gt.shape)} differ")
    losses = [F.mse_loss(p, g) for p, g in zip(extractor(pred), extractor(gt))]
    return torch.stack(losses).mean()


def total_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    logits: Optional[torch.Tensor],
    label: Optional[torch.Tensor],
    weights: LossWeights,
    lambda_: float = 1.0,
    extractor: Optional[PerceptualExtractor] = None,
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """
    L_S = smooth_l1 + gamma1 * perceptual and total = L_S + gamma2 * CE.

    :return: the differentiable total and a float breakdown keyed by LOSS_COMPONENTS
    """
    zero = pred.new_zeros(())
    l1 = smooth_l1(pred, gt)
    perc = perceptual_loss(pred, gt, extractor) if extractor is not None else zero
    adv = adversarial_loss(logits, label, lambda_) if logits is not None else zero
    total = l1 + weights.gamma1 * perc + weights.gamma2 * adv
    components = {
        "smooth_l1": float(l1.detach()),
        "perceptual": float(perc.detach()),
        "adversarial": float(adv.detach()),
        "total": float(total.detach()),
    }
    return total, components
