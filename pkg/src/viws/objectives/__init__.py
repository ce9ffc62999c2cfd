from viws.objectives.losses import (
    LOSS_COMPONENTS,
    PerceptualExtractor,
    build_extractor,
    perceptual_loss,
    smooth_l1,
    total_loss,
)
from viws.objectives.metrics import psnr, ssim

__all__ = [
    "LOSS_COMPONENTS",
    "PerceptualExtractor",
    "build_extractor",
    "perceptual_loss",
    "psnr",
    "smooth_l1",
    "ssim",
    "total_loss",
]
