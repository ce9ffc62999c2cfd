import math
import os
import sys
import unittest

import pytest
import torch
import torch.nn as nn

# Add src to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), "src"))

from viws.errors import ParameterError
from viws.model.adversarial import (
    FrameDescriptor,
    GatedAttentionPool,
    GradientReversal,
    WeatherDiscriminator,
    adversarial_loss,
    classify_weather,
    gated_attention_pool,
    grl,
    lambda_schedule,
)


class TestGradientReversal(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.x = torch.randn(4, 6)

    def test_forward_identity(self):
        self.assertTrue(torch.equal(grl(self.x, 0.7), self.x))
        self.assertTrue(torch.equal(GradientReversal(0.3)(self.x), self.x))

    def _input_grad(self, lambda_=None):
        x = self.x.clone().requires_grad_(True)
        torch.manual_seed(1)
        head = nn.Sequential(nn.Linear(6, 5), nn.Tanh(), nn.Linear(5, 1))
        for p in head.parameters():
            nn.init.normal_(p)
        y = grl(x, lambda_) if lambda_ is not None else x
        head(y).sum().backward()
        return x.grad

    def test_lambda_one_negates(self):
        torch.testing.assert_close(self._input_grad(1.0), -self._input_grad())

    def test_lambda_scales(self):
        torch.testing.assert_close(self._input_grad(0.25), -0.25 * self._input_grad())

    def test_lambda_zero_blocks(self):
        self.assertTrue(torch.all(self._input_grad(0.0) == 0))

    def test_gradcheck(self):
        x = self.x.double().requires_grad_(True)

        def fn(t):
            return grl(t, 0.6)

        # identity forward: the numerical Jacobian is +I while the reversal reports -0.6 I
        self.assertFalse(torch.autograd.gradcheck(fn, (x,), raise_exception=False))

        def reversed_twice(t):
            return grl(grl(t, 0.6), 1.0 / 0.6)

        self.assertTrue(torch.autograd.gradcheck(reversed_twice, (x,)))
        self.assertTrue(torch.autograd.gradgradcheck(reversed_twice, (x,)))

    def test_sign_of_encoder_update(self):
        """Reversed gradients push the encoder towards higher classifier loss."""
        torch.manual_seed(2)
        x = torch.randn(8, 4)
        label = torch.randint(0, 3, (8,))
        classifier = nn.Linear(4, 3)
        for p in classifier.parameters():
            p.requires_grad_(False)

        def step(reverse: bool) -> float:
            torch.manual_seed(3)
            encoder = nn.Linear(4, 4)
            features = encoder(x)
            if reverse:
                features = grl(features, 1.0)
            nn.functional.cross_entropy(classifier(features), label).backward()
            with torch.no_grad():
                before = nn.functional.cross_entropy(classifier(encoder(x)), label).item()
                for p in encoder.parameters():
                    p -= 1e-2 * p.grad
                after = nn.functional.cross_entropy(classifier(encoder(x)), label).item()
            return after - before

        self.assertGreater(step(reverse=True), 0)
        self.assertLess(step(reverse=False), 0)


class TestLambdaSchedule(unittest.TestCase):
    def test_values(self):
        self.assertEqual(lambda_schedule(0.0), 0.0)
        self.assertAlmostEqual(lambda_schedule(0.5), 0.986614, places=6)
        self.assertAlmostEqual(lambda_schedule(1.0), 0.999909, places=6)

    def test_monotone(self):
        values = [lambda_schedule(p / 100) for p in range(101)]
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))

    def test_out_of_range_is_clamped(self):
        with self.assertLogs("viws.model.adversarial", level="WARNING"):
            self.assertEqual(lambda_schedule(1.5), lambda_schedule(1.0))
        with self.assertLogs("viws.model.adversarial", level="WARNING"):
            self.assertEqual(lambda_schedule(-0.2), 0.0)

    def test_nan_progress_rejected(self):
        with self.assertRaises(ParameterError):
            lambda_schedule(float("nan"))


class TestGatedAttentionPool(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(4)
        self.pool = GatedAttentionPool(16, 8).double()

    def test_weights_sum_to_one(self):
        _, alpha = self.pool(torch.randn(3, 5, 16, dtype=torch.float64))
        torch.testing.assert_close(alpha.sum(dim=-1), torch.ones(3, dtype=torch.float64))

    def test_identical_frames(self):
        v = torch.randn(1, 16, dtype=torch.float64).expand(5, -1)
        pooled, alpha = gated_attention_pool(v, self.pool)
        torch.testing.assert_close(alpha, torch.full((5,), 0.2, dtype=torch.float64))
        torch.testing.assert_close(pooled, v[0])

    def test_permutation_invariant(self):
        v = torch.randn(2, 5, 16, dtype=torch.float64)
        perm = torch.tensor([3, 0, 4, 1, 2])
        pooled, alpha = self.pool(v)
        pooled_p, alpha_p = self.pool(v[:, perm])
        torch.testing.assert_close(pooled_p, pooled)
        torch.testing.assert_close(alpha_p, alpha[:, perm])

    def test_gradcheck(self):
        v = torch.randn(2, 4, 16, dtype=torch.float64, requires_grad=True)

        def fn(t):
            return self.pool(t)

        self.assertTrue(torch.autograd.gradcheck(fn, (v,), eps=1e-6, atol=1e-5))
        self.assertTrue(torch.autograd.gradgradcheck(fn, (v,), eps=1e-6, atol=1e-5))

    def test_hand_computed_two_frames(self):
        w2 = [[0.5, -1.0], [2.0, 0.25]]
        w3 = [[1.0, 0.0], [-0.5, 1.5]]
        w1 = [0.8, -0.3]
        frames = [[1.0, 0.0], [0.4, -2.0]]
        pool = GatedAttentionPool(2, 2).double()
        with torch.no_grad():
            pool.w2.weight.copy_(torch.tensor(w2, dtype=torch.float64))
            pool.w3.weight.copy_(torch.tensor(w3, dtype=torch.float64))
            pool.w1.weight.copy_(torch.tensor([w1], dtype=torch.float64))

        def score(v):
            total = 0.0
            for a in range(2):
                h = sum(w2[a][d] * v[d] for d in range(2))
                g = sum(w3[a][d] * v[d] for d in range(2))
                total += w1[a] * math.tanh(h) / (1.0 + math.exp(-g))
            return total

        s = [score(v) for v in frames]
        alpha = [math.exp(x) / sum(math.exp(y) for y in s) for x in s]
        expected = [sum(alpha[i] * frames[i][d] for i in range(2)) for d in range(2)]

        pooled, got = gated_attention_pool(torch.tensor(frames, dtype=torch.float64), pool)
        self.assertTrue(all(abs(a - b) < 1e-12 for a, b in zip(got.tolist(), alpha)))
        self.assertTrue(all(abs(a - b) < 1e-12 for a, b in zip(pooled.tolist(), expected)))


class TestDiscriminator(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(5)
        self.features = [torch.randn(2, 5, 16, 32), torch.randn(2, 5, 4, 64)]

    def test_frame_descriptor(self):
        descriptor = FrameDescriptor([64], 128)
        constant = torch.full((1, 2, 4, 64), 0.3)
        torch.testing.assert_close(descriptor([constant])[0, 0], descriptor.proj(torch.full((64,), 0.3)))
        tokens = torch.randn(1, 2, 4, 64)
        torch.testing.assert_close(descriptor([tokens[:, :, [2, 0, 3, 1]]]), descriptor([tokens]))
        self.assertEqual(tuple(descriptor([tokens]).shape), (1, 2, 128))

    def test_shapes(self):
        disc = WeatherDiscriminator([32, 64], taps=[2], descriptor_dim=24, attention_dim=12)
        logits, alpha = disc(self.features)
        self.assertEqual(tuple(logits.shape), (2, 3))
        self.assertEqual(tuple(alpha.shape), (2, 5))

    def test_reversal_reaches_tapped_features_only(self):
        disc = WeatherDiscriminator([32, 64], taps=[2], descriptor_dim=24, attention_dim=12)
        label = torch.tensor([0, 2])

        def grads(lambda_):
            feats = [f.clone().requires_grad_(True) for f in self.features]
            logits, _ = disc(feats, lambda_)
            adversarial_loss(logits, label).backward()
            return feats

        plain, reversed_ = grads(None), grads(1.0)
        self.assertIsNone(reversed_[0].grad)
        torch.testing.assert_close(reversed_[1].grad, -plain[1].grad)
        self.assertTrue(torch.all(grads(0.0)[1].grad == 0))

    def test_classifier(self):
        classifier = nn.Linear(8, 3)
        with torch.no_grad():
            classifier.weight.zero_()
            classifier.bias.copy_(torch.tensor([0.1, -0.2, 0.3]))
        logits = classify_weather(torch.randn(8), classifier)
        self.assertEqual(tuple(logits.shape), (3,))
        torch.testing.assert_close(logits, classifier.bias)
        nn.init.normal_(classifier.weight)
        v = torch.randn(8)
        self.assertEqual(
            classify_weather(v, classifier).argmax().item(),
            (classify_weather(v, classifier) + 5.0).argmax().item(),
        )


@pytest.mark.parametrize(
    "logits,label,expected",
    [
        ([0.0, 0.0, 0.0], 1, math.log(3)),
        ([1.0, 0.0, 0.0], 0, -math.log(math.e / (math.e + 2))),
    ],
)
def test_adversarial_loss_values(logits, label, expected):
    loss = adversarial_loss(torch.tensor(logits, dtype=torch.float64), label)
    assert abs(loss.item() - expected) < 1e-12


def test_adversarial_loss_vanishes_with_margin():
    margins = (1.0, 5.0, 20.0)
    losses = [adversarial_loss(torch.tensor([m, 0.0, 0.0], dtype=torch.float64), 0).item() for m in margins]
    assert losses[0] > losses[1] > losses[2]
    assert losses[2] < 1e-8
    assert abs(losses[0] - 0.5514) < 1e-4
