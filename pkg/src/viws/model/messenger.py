"""
Weather messenger tokens and their long short-term temporal shifting.

Messenger tokens of every frame are split into equal groups. Each group is
moved along the frame axis by its own (direction, step): with the default plan
the first half of the groups looks one frame back/forward (short-term) and the
second half two frames (long-term). Slots vacated at the clip boundary are
zero-filled; shiftback applies the opposite move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import torch
import torch.nn as nn

from viws.config import DEFAULT_SHIFT_PLAN
from viws.errors import ConfigurationError

NONE, FORWARD, BACKWARD = "none", "forward", "backward"
_SIGN = {NONE: 0, FORWARD: 1, BACKWARD: -1}


def validate_plan(plan: Sequence[Tuple[str, int]]) -> List[Tuple[str, int]]:
    checked = []
    for direction, step in plan:
        if direction not in _SIGN:
            raise ConfigurationError(f"unknown shift direction {direction!r}")
        if not 0 <= int(step) <= 2:
            raise ConfigurationError(f"shift step must be 0..2, got {step}")
        checked.append((direction, int(step)))
    return checked


def group_map(num_tokens: int, num_groups: int) -> List[List[int]]:
    if num_tokens % num_groups:
        raise ConfigurationError(
            f"{num_tokens} messenger tokens cannot be split into {num_groups} equal groups"
        )
    size = num_tokens // num_groups
    return [list(range(g * size, (g + 1) * size)) for g in range(num_groups)]


def shift_tokens(
    tokens: torch.Tensor, plan: Sequence[Tuple[str, int]], inverse: bool = False
) -> torch.Tensor:
    """Shift (..., T, M, C) tokens group-wise along the frame axis."""
    num_frames, num_tokens = tokens.shape[-3], tokens.shape[-2]
    size = num_tokens // len(plan)
    out = torch.zeros_like(tokens)
    for g, (direction, step) in enumerate(plan):
        group = slice(g * size, (g + 1) * size)
        sign = -_SIGN[direction] if inverse else _SIGN[direction]
        # steps clamp to the clip length
        s = min(step, num_frames - 1)
        if sign == 0 or s == 0:
            out[..., :, group, :] = tokens[..., :, group, :]
        elif sign > 0:
            # frame k receives frame k - s
            out[..., s:, group, :] = tokens[..., :-s, group, :]
        else:
            out[..., :-s, group, :] = tokens[..., s:, group, :]
    return out


@dataclass
class MessengerTokens:
    tokens: torch.Tensor  # (T, M, C)
    group_map: List[List[int]]
    shift_plan: List[Tuple[str, int]]

    @property
    def num_frames(self) -> int:
        return self.tokens.shape[0]


def init_messengers(
    M: int,
    C: int,
    seed: int,
    num_frames: int = 5,
    shift_plan: Sequence[Tuple[str, int]] = DEFAULT_SHIFT_PLAN,
) -> MessengerTokens:
    plan = validate_plan(shift_plan)
    groups = group_map(M, len(plan))
    generator = torch.Generator().manual_seed(seed)
    base = torch.empty(M, C)
    nn.init.trunc_normal_(base, std=0.02, a=-0.04, b=0.04, generator=generator)
    # every frame starts from the same block and then trains freely
    tokens = base.unsqueeze(0).repeat(num_frames, 1, 1)
    return MessengerTokens(tokens=tokens, group_map=groups, shift_plan=plan)


def temporal_shift(m: MessengerTokens) -> MessengerTokens:
    return replace(m, tokens=shift_tokens(m.tokens, m.shift_plan))


def temporal_shiftback(m: MessengerTokens) -> MessengerTokens:
    return replace(m, tokens=shift_tokens(m.tokens, m.shift_plan, inverse=True))


class MessengerBank(nn.Module):
    """Learnable per-frame messenger tokens, expanded over the batch."""

    def __init__(
        self,
        num_frames: int,
        num_messengers: int,
        channels: int,
        seed: int = 0,
        shift_plan: Sequence[Tuple[str, int]] = DEFAULT_SHIFT_PLAN,
    ):
        super().__init__()
        init = init_messengers(num_messengers, channels, seed, num_frames, shift_plan)
        self.tokens = nn.Parameter(init.tokens)
        self.shift_plan = init.shift_plan

    def forward(self, batch_size: int) -> torch.Tensor:
        return self.tokens.unsqueeze(0).expand(batch_size, -1, -1, -1)
