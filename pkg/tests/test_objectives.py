import math
import os
import sys
import unittest

import cv2
import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

# Add src to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), "src"))

from viws.config import LossWeights, PerceptualConfig
from viws.data.types import FramePair
from viws.errors import ShapeError
from viws.objectives import (
    PerceptualExtractor,
    build_extractor,
    perceptual_loss,
    psnr,
    smooth_l1,
    ssim,
    total_loss,
)



def _checkerboard(size=16, block=2):
    yy, xx = np.indices((size, size))
    board = ((yy // block + xx // block) % 2).astype(np.float64)
    return np.repeat(board[..., None], 3, axis=-1)


class TestSmoothL1(unittest.TestCase):
    def test_closed_form(self):
        gt = torch.zeros(2, 3, 4, 4)
        self.assertEqual(smooth_l1(gt, gt).item(), 0.0)
        self.assertAlmostEqual(smooth_l1(gt + 0.5, gt).item(), 0.125)
        self.assertAlmostEqual(smooth_l1(gt + 2.0, gt).item(), 1.5)
        self.assertAlmostEqual(smooth_l1(gt - 2.0, gt).item(), 1.5)

    def test_continuous_and_smooth_at_knee(self):
        eps = 1e-6
        values, slopes = [], []
        for d in (1.0 - eps, 1.0 + eps):
            x = torch.tensor([d], dtype=torch.float64, requires_grad=True)
            loss = smooth_l1(x, torch.zeros(1, dtype=torch.float64))
            loss.backward()
            values.append(loss.item())
            slopes.append(x.grad.item())
        self.assertAlmostEqual(values[0], values[1], places=5)
        self.assertAlmostEqual(slopes[0], slopes[1], places=5)
        self.assertAlmostEqual(values[0], 0.5, places=5)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            smooth_l1(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


class TestPerceptual(unittest.TestCase):
    def setUp(self):
        self.extractor = PerceptualExtractor(seed=0).double()
        g = torch.Generator().manual_seed(0)
        self.gt = torch.rand(1, 3, 32, 32, generator=g, dtype=torch.float64)
        self.direction = torch.randn(1, 3, 32, 32, generator=g, dtype=torch.float64)

    def test_frozen_and_seeded(self):
        self.assertFalse(any(p.requires_grad for p in self.extractor.parameters()))
        self.extractor.train()
        self.assertFalse(self.extractor.training)
        other = build_extractor(PerceptualConfig(seed=0)).double()
        for a, b in zip(self.extractor.parameters(), other.parameters()):
            self.assertTrue(torch.equal(a, b))

    def test_taps(self):
        features = self.extractor(self.gt)
        self.assertEqual([f.shape[1] for f in features], [64, 128, 256])
        self.assertEqual([f.shape[-1] for f in features], [32, 16, 8])

    def test_zero_and_nonnegative(self):
        self.assertEqual(perceptual_loss(self.gt, self.gt, self.extractor).item(), 0.0)
        self.assertGreater(perceptual_loss(self.gt + 0.1 * self.direction, self.gt, self.extractor).item(), 0.0)

    def test_second_order(self):
        losses = [
            perceptual_loss(self.gt + eps * self.direction, self.gt, self.extractor).item()
            for eps in (1e-3, 1e-4)
        ]
        slope = math.log10(losses[0] / losses[1])
        self.assertGreater(slope, 1.8)
        self.assertLess(slope, 2.2)

    def test_gradients_reach_prediction_only(self):
        pred = self.gt.clone().requires_grad_(True)
        perceptual_loss(pred + 0.05 * self.direction, self.gt, self.extractor).backward()
        self.assertIsNotNone(pred.grad)
        self.assertTrue(all(p.grad is None for p in self.extractor.parameters()))


class TestTotalLoss(unittest.TestCase):
    def setUp(self):
        g = torch.Generator().manual_seed(1)
        self.gt = torch.rand(3, 3, 32, 32, generator=g)
        self.pred = (self.gt + 0.1 * torch.randn(3, 3, 32, 32, generator=g)).clamp(0, 1)
        self.logits = torch.randn(3, 3, generator=g)
        self.label = torch.tensor([0, 1, 2])
        self.extractor = PerceptualExtractor(seed=0)

    def test_zero_weights(self):
        total, parts = total_loss(self.pred, self.gt, self.logits, self.label, LossWeights(0.0, 0.0), 1.0, self.extractor)
        self.assertAlmostEqual(total.item(), smooth_l1(self.pred, self.gt).item(), places=7)
        self.assertAlmostEqual(parts["total"], parts["smooth_l1"], places=7)

    def test_components_recombine(self):
        total, parts = total_loss(self.pred, self.gt, self.logits, self.label, LossWeights(), 0.5, self.extractor)
        expected = parts["smooth_l1"] + 0.04 * parts["perceptual"] + 0.001 * parts["adversarial"]
        self.assertAlmostEqual(parts["total"], expected, places=6)
        self.assertAlmostEqual(total.item(), expected, places=6)
        self.assertTrue(all(v >= 0 for v in parts.values()))

    def test_perfect_prediction_uniform_logits(self):
        total, _ = total_loss(self.gt, self.gt, torch.zeros(3, 3), self.label, LossWeights(), 1.0, self.extractor)
        self.assertAlmostEqual(total.item(), 0.001 * math.log(3), places=7)
        self.assertAlmostEqual(total.item(), 0.0010986, places=7)

    def test_without_extractor_or_logits(self):
        total, parts = total_loss(self.pred, self.gt, None, None, LossWeights(), 1.0, None)
        self.assertEqual(parts["perceptual"], 0.0)
        self.assertEqual(parts["adversarial"], 0.0)
        self.assertAlmostEqual(total.item(), parts["smooth_l1"], places=7)

    def test_gradcheck(self):
        extractor = self.extractor.double()
        gt = self.gt[:1, :, :16, :16].double()
        pred = self.pred[:1, :, :16, :16].double().requires_grad_(True)
        logits = self.logits[:1].double().requires_grad_(True)
        label = self.label[:1]

        def fn(x, z):
            return total_loss(x, gt, z, label, LossWeights(), 1.0, extractor)[0]

        self.assertTrue(torch.autograd.gradcheck(fn, (pred, logits), eps=1e-6, atol=1e-5, fast_mode=True))


class TestPSNR(unittest.TestCase):
    def test_closed_form(self):
        gt = np.full((8, 8, 3), 0.2)
        self.assertAlmostEqual(psnr(gt + 0.1, gt), 20.0, places=9)
        self.assertAlmostEqual(psnr(FramePair(gt + 0.5, gt)), 10 * math.log10(4), places=9)
        self.assertAlmostEqual(psnr(gt + 0.5, gt), 6.0206, places=4)

    def test_identical_is_infinite(self):
        frame = np.random.default_rng(0).random((8, 8, 3))
        self.assertEqual(psnr(frame, frame), math.inf)

    def test_symmetric_and_clamped(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
        self.assertEqual(psnr(a, b), psnr(b, a))
        self.assertEqual(psnr(a + 5.0, b), psnr(np.ones_like(a), b))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            psnr(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))


class TestSSIM(unittest.TestCase):
    def test_identical(self):
        frame = np.random.default_rng(2).random((16, 16, 3))
        self.assertAlmostEqual(ssim(frame, frame), 1.0, places=12)

    def test_negative_image(self):
        frame = np.random.default_rng(3).random((16, 16, 3))
        self.assertLess(ssim(frame, 1.0 - frame), 1.0)

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((24, 20, 3)), rng.random((24, 20, 3))
        self.assertAlmostEqual(ssim(a, b), ssim(b, a), places=12)

    def test_matches_reference_implementation(self):
        board = _checkerboard()
        blurred = cv2.GaussianBlur(board, (5, 5), 1.0)
        reference = structural_similarity(
            board,
            blurred,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            data_range=1.0,
            channel_axis=-1,
        )
        self.assertLess(abs(ssim(board, blurred) - reference), 1e-6)

    def test_matches_reference_on_noise(self):
        rng = np.random.default_rng(5)
        a = rng.random((32, 40, 3))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        reference = structural_similarity(
            a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0, channel_axis=-1
        )
        self.assertLess(abs(ssim(a, b) - reference), 1e-6)

    def test_too_small(self):
        with self.assertRaises(ShapeError):
            ssim(np.zeros((10, 16, 3)), np.zeros((10, 16, 3)))


@pytest.mark.parametrize("diff", [0.05, 0.1, 0.3])
def test_psnr_monotone_in_error(diff):
    gt = np.full((8, 8, 3), 0.3)
    assert psnr(gt + diff, gt) > psnr(gt + diff * 1.5, gt)
