"""PSNR and SSIM on [0, 1] frames, computed in float64."""

import math

import cv2
import numpy as np

from viws.data.types import FramePair
from viws.errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(pair_or_pred, gt=None) -> FramePair:
    if isinstance(pair_or_pred, FramePair):
        return pair_or_pred
    return FramePair(np.asarray(pair_or_pred), np.asarray(gt))


def psnr(pair_or_pred, gt=None) -> float:
    """10 log10(1 / MSE); identical frames give +inf."""
    pred, target = _pair(pair_or_pred, gt).clamped()
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _filter(x: np.ndarray) -> np.ndarray:
    return cv2.GaussianBlur(
        x, (SSIM_WINDOW, SSIM_WINDOW), sigmaX=SSIM_SIGMA, sigmaY=SSIM_SIGMA,
        borderType=cv2.BORDER_REFLECT,
    )


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    ux, uy = _filter(x), _filter(y)
    vx = _filter(x * x) - ux * ux
    vy = _filter(y * y) - uy * uy
    vxy = _filter(x * y) - ux * uy
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux**2 + uy**2 + c1) * (vx + vy + c2))
    # only windows fully inside the frame
    pad = SSIM_WINDOW // 2
    return float(s[pad:-pad, pad:-pad].mean())


def ssim(pair_or_pred, gt=None) -> float:
    """Single-scale gaussian SSIM, averaged over the RGB channels."""
    pred, target = _pair(pair_or_pred, gt).clamped()
    if pred.ndim == 2:
        pred, target = pred[..., None], target[..., None]
    h, w = pred.shape[:2]
    if min(h, w) < SSIM_WINDOW:
        raise ShapeError(f"{h}x{w} frames are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    return float(
        np.mean(
            [
                _ssim_channel(np.ascontiguousarray(pred[..., c]), np.ascontiguousarray(target[..., c]))
                for c in range(pred.shape[-1])
            ]
        )
    )
