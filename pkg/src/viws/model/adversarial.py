"""
Weather-suppression adversarial branch.

The discriminator reads final-stage (or selected) pixel features through a
gradient reversal layer, pools per-frame descriptors with gated attention and
predicts the weather type. Trained jointly with the restoration objective,
it learns to classify while the encoder receives the reversed, λ-scaled
gradient and unlearns weather identity.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from viws.data.types import NUM_WEATHERS
from viws.errors import ParameterError

logger = logging.getLogger(__name__)


class _GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lambda_):
        ctx.lambda_ = lambda_
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.lambda_, None


def grl(x: torch.Tensor, lambda_: float = 1.0) -> torch.Tensor:
    """Identity forward; gradients are multiplied by -lambda_ on the way back."""
    return _GradientReversal.apply(x, float(lambda_))


class GradientReversal(nn.Module):
    def __init__(self, lambda_: float = 0.0):
        super().__init__()
        self.lambda_ = lambda_

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return grl(x, self.lambda_)


def lambda_schedule(p: float) -> float:
    """λ = 2 / (1 + exp(-10 p)) - 1 for training progress p in [0, 1]."""
    if math.isnan(p):
        raise ParameterError("training progress is NaN")
    if not 0.0 <= p <= 1.0:
        logger.warning(f"training progress {p} outside [0, 1], clamping")
        p = min(max(p, 0.0), 1.0)
    return 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0


class FrameDescriptor(nn.Module):
    """Spatial mean of each frame's pixel tokens projected to the descriptor width."""

    def __init__(self, in_channels: Sequence[int], descriptor_dim: int):
        super().__init__()
        self.proj = nn.Linear(sum(in_channels), descriptor_dim)

    def forward(self, features: Sequence[torch.Tensor]) -> torch.Tensor:
        # features: (B, T, L_l, C_l) per tap
        pooled = torch.cat([f.mean(dim=2) for f in features], dim=-1)
        return self.proj(pooled)


class GatedAttentionPool(nn.Module):
    """
    α_i = softmax_i(w1ᵀ (tanh(w2 v_i) ⊙ sigmoid(w3 v_i))), v = Σ α_i v_i.

    All three maps are bias-free so a clip of identical frames always pools
    with uniform weights.
    """

    def __init__(self, descriptor_dim: int, attention_dim: int):
        super().__init__()
        self.w2 = nn.Linear(descriptor_dim, attention_dim, bias=False)
        self.w3 = nn.Linear(descriptor_dim, attention_dim, bias=False)
        self.w1 = nn.Linear(attention_dim, 1, bias=False)

    def scores(self, v: torch.Tensor) -> torch.Tensor:
        return self.w1(torch.tanh(self.w2(v)) * torch.sigmoid(self.w3(v))).squeeze(-1)

    def forward(self, v: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        # v: (B, T, D_v)
        alpha = F.softmax(self.scores(v), dim=-1)
        return torch.einsum("bt,btd->bd", alpha, v), alpha


def gated_attention_pool(v: torch.Tensor, pool: GatedAttentionPool) -> Tuple[torch.Tensor, torch.Tensor]:
    """Pool (T, D_v) or (B, T, D_v) descriptors; returns (v, α)."""
    if v.dim() == 2:
        pooled, alpha = pool(v.unsqueeze(0))
        return pooled[0], alpha[0]
    return pool(v)


class WeatherDiscriminator(nn.Module):
    def __init__(
        self,
        stage_channels: Sequence[int],
        taps: Sequence[int],
        descriptor_dim: int,
        attention_dim: int,
        num_classes: int = NUM_WEATHERS,
    ):
        super().__init__()
        self.taps = list(taps)
        self.descriptor = FrameDescriptor([stage_channels[t - 1] for t in self.taps], descriptor_dim)
        self.pool = GatedAttentionPool(descriptor_dim, attention_dim)
        self.classifier = nn.Linear(descriptor_dim, num_classes)

    def describe(self, features: List[torch.Tensor]) -> torch.Tensor:
        return self.descriptor([features[t - 1] for t in self.taps])

    def forward(
        self, features: List[torch.Tensor], lambda_: Optional[float] = None
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :param features: per-stage pixel features (B, T, L, C); messengers are never passed here
        :param lambda_: GRL scale; None skips the reversal entirely
        :return: logits (B, Q) and frame weights α (B, T)
        """
        if lambda_ is not None:
            features = [grl(f, lambda_) if i + 1 in self.taps else f for i, f in enumerate(features)]
        pooled, alpha = self.pool(self.describe(features))
        return self.classifier(pooled), alpha


def classify_weather(v: torch.Tensor, classifier: nn.Linear) -> torch.Tensor:
    return classifier(v)


def adversarial_loss(logits: torch.Tensor, label: torch.Tensor, lambda_: float = 1.0) -> torch.Tensor:
    """
    Cross-entropy of the weather logits.

    lambda_ is accepted for symmetry with the schedule; it acts through the
    GRL only, so the discriminator's own objective stays unscaled.
    """
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    label = torch.as_tensor(label, device=logits.device).reshape(-1).long()
    return F.cross_entropy(logits, label)
