"""
Weather-agnostic video transformer encoder.

Frames are embedded frame-by-frame with overlapped convolutions, concatenated
with their weather messenger tokens and run through stages of shunted
self-attention (SSA) and detail-specific feed-forward (DSF) blocks. Pixel
tokens are merged x2 between stages; messengers are linearly projected to the
new width and shifted along the frame axis around every stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from viws.config import DEFAULT_SHIFT_PLAN, EncoderConfig
from viws.errors import ShapeError
from viws.model.messenger import shift_tokens, validate_plan


def init_weights(m: nn.Module) -> None:
    if isinstance(m, nn.Linear):
        nn.init.trunc_normal_(m.weight, std=0.02)
        if m.bias is not None:
            nn.init.constant_(m.bias, 0)
    elif isinstance(m, nn.LayerNorm):
        nn.init.constant_(m.bias, 0)
        nn.init.constant_(m.weight, 1.0)
    elif isinstance(m, nn.Conv2d):
        fan_out = m.kernel_size[0] * m.kernel_size[1] * m.out_channels
        fan_out //= m.groups
        m.weight.data.normal_(0, math.sqrt(2.0 / fan_out))
        if m.bias is not None:
            m.bias.data.zero_()


@dataclass
class TokenGrid:
    tokens: torch.Tensor  # (N, L, C)
    spatial_dims: Tuple[int, int]

    def __post_init__(self):
        h, w = self.spatial_dims
        if self.tokens.dim() != 3 or self.tokens.shape[1] != h * w:
            raise ShapeError(
                f"{tuple(self.tokens.shape)} tokens do not factor into a {h}x{w} grid"
            )

    def to_map(self) -> torch.Tensor:
        n, _, c = self.tokens.shape
        h, w = self.spatial_dims
        return self.tokens.transpose(1, 2).reshape(n, c, h, w)

    @classmethod
    def from_map(cls, x: torch.Tensor) -> TokenGrid:
        return cls(x.flatten(2).transpose(1, 2), (x.shape[2], x.shape[3]))


@dataclass
class JointTokens:
    pixel: TokenGrid
    messenger: Optional[torch.Tensor] = None  # (N, M, C)

    def sequence(self) -> torch.Tensor:
        if self.messenger is None:
            return self.pixel.tokens
        return torch.cat([self.pixel.tokens, self.messenger], dim=1)

    def split(self, sequence: torch.Tensor) -> JointTokens:
        num_pixels = self.pixel.tokens.shape[1]
        messenger = sequence[:, num_pixels:] if self.messenger is not None else None
        return JointTokens(TokenGrid(sequence[:, :num_pixels], self.pixel.spatial_dims), messenger)


class OverlapPatchEmbed(nn.Module):
    def __init__(self, in_chans: int, embed_dim: int, kernel: int, stride: int, padding: int):
        super().__init__()
        self.stride = stride
        self.proj = nn.Conv2d(in_chans, embed_dim, kernel_size=kernel, stride=stride, padding=padding)
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, x: torch.Tensor) -> TokenGrid:
        if x.dim() != 4 or x.shape[1] != self.proj.in_channels:
            raise ShapeError(
                f"patch embedding expects (N, {self.proj.in_channels}, H, W), got {tuple(x.shape)}"
            )
        if x.shape[2] % self.stride or x.shape[3] % self.stride:
            raise ShapeError(f"{x.shape[2]}x{x.shape[3]} is not divisible by stride {self.stride}")
        grid = TokenGrid.from_map(self.proj(x))
        return TokenGrid(self.norm(grid.tokens), grid.spatial_dims)


class ShuntedAttention(nn.Module):
    """
    Multi-head attention whose two head groups see keys/values aggregated at
    different spatial rates. Messenger tokens join the keys/values of both
    groups without aggregation.
    """

    def __init__(self, dim: int, num_heads: int, ratios: Sequence[int]):
        super().__init__()
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim**-0.5
        self.q = nn.Linear(dim, dim)
        if num_heads == 1:
            split = [(1, ratios[0])]
        else:
            split = [(num_heads // 2, ratios[0]), (num_heads - num_heads // 2, ratios[1])]
        self.group_heads = [h for h, _ in split]
        self.group_ratios = [r for _, r in split]
        self.reducers = nn.ModuleList(
            [
                nn.Sequential(
                    nn.Conv2d(dim, dim, kernel_size=r, stride=r), _TokenNorm(dim), nn.GELU()
                )
                if r > 1
                else nn.Identity()
                for r in self.group_ratios
            ]
        )
        self.kvs = nn.ModuleList(
            [nn.Linear(dim, 2 * h * self.head_dim) for h in self.group_heads]
        )
        self.proj = nn.Linear(dim, dim)
        # test hooks
        self.force_uniform = False
        self.mask_messengers = False

    def _reduce(self, g: int, pixel: TokenGrid) -> torch.Tensor:
        r = self.group_ratios[g]
        if r == 1:
            return pixel.tokens
        h, w = pixel.spatial_dims
        if h % r or w % r:
            raise ShapeError(f"{h}x{w} grid cannot be aggregated at rate {r}")
        return self.reducers[g](pixel.to_map()).flatten(2).transpose(1, 2)

    def forward(self, joint: JointTokens) -> torch.Tensor:
        x = joint.sequence()
        n, s, c = x.shape
        q = self.q(x).reshape(n, s, self.num_heads, self.head_dim).transpose(1, 2)
        outs = []
        offset = 0
        for g, heads in enumerate(self.group_heads):
            source = self._reduce(g, joint.pixel)
            if joint.messenger is not None and not self.mask_messengers:
                source = torch.cat([source, joint.messenger], dim=1)
            kv = self.kvs[g](source).reshape(n, -1, 2, heads, self.head_dim).permute(2, 0, 3, 1, 4)
            k, v = kv[0], kv[1]
            attn = (q[:, offset : offset + heads] @ k.transpose(-2, -1)) * self.scale
            if self.force_uniform:
                attn = torch.full_like(attn, 1.0 / k.shape[2])
            else:
                attn = attn.softmax(dim=-1)
            outs.append(attn @ v)
            offset += heads
        out = torch.cat(outs, dim=1).transpose(1, 2).reshape(n, s, c)
        return self.proj(out)


class _TokenNorm(nn.Module):
    """LayerNorm over the channel axis of an (N, C, H, W) map."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class SSABlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, ratios: Sequence[int]):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attn = ShuntedAttention(dim, num_heads, ratios)

    def forward(self, joint: JointTokens) -> JointTokens:
        if joint.pixel.tokens.shape[-1] != self.attn.dim:
            raise ShapeError(
                f"SSA block of width {self.attn.dim} got {joint.pixel.tokens.shape[-1]} channels"
            )
        x = joint.sequence()
        normed = joint.split(self.norm(x))
        return joint.split(x + self.attn(normed))


class DetailSpecificFeedForward(nn.Module):
    """MLP with a depth-wise 3x3 convolution between its two linear maps.

    Messenger tokens have no spatial layout and skip the convolution.
    """

    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.dim = dim
        self.norm = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.dwconv = nn.Conv2d(hidden, hidden, 3, 1, 1, groups=hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, joint: JointTokens) -> JointTokens:
        if joint.pixel.tokens.shape[-1] != self.dim:
            raise ShapeError(f"DSF block of width {self.dim} got {joint.pixel.tokens.shape[-1]} channels")
        pixel = self.fc1(self.norm(joint.pixel.tokens))
        pixel = TokenGrid.from_map(self.dwconv(TokenGrid(pixel, joint.pixel.spatial_dims).to_map()))
        pixel = joint.pixel.tokens + self.fc2(self.act(pixel.tokens))
        messenger = joint.messenger
        if messenger is not None:
            messenger = messenger + self.fc2(self.act(self.fc1(self.norm(messenger))))
        return JointTokens(TokenGrid(pixel, joint.pixel.spatial_dims), messenger)


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, ratios: Sequence[int], mlp_ratio: int):
        super().__init__()
        self.ssa = SSABlock(dim, num_heads, ratios)
        self.dsf = DetailSpecificFeedForward(dim, dim * mlp_ratio)

    def forward(self, joint: JointTokens) -> JointTokens:
        return self.dsf(self.ssa(joint))


class EncoderStage(nn.Module):
    def __init__(
        self,
        in_chans: int,
        dim: int,
        depth: int,
        num_heads: int,
        ratios: Sequence[int],
        mlp_ratio: int,
        kernel: int,
        stride: int,
        padding: int,
        messenger_in: Optional[int],
    ):
        super().__init__()
        self.embed = OverlapPatchEmbed(in_chans, dim, kernel, stride, padding)
        self.messenger_proj = None
        if messenger_in is not None:
            self.messenger_proj = nn.Identity() if messenger_in == dim else nn.Linear(messenger_in, dim)
            self.messenger_norm = nn.LayerNorm(dim)
        for b in range(depth):
            self.add_module(f"block{b}", EncoderBlock(dim, num_heads, ratios, mlp_ratio))
        self.depth = depth
        self.norm = nn.LayerNorm(dim)

    @property
    def blocks(self) -> List[EncoderBlock]:
        return [getattr(self, f"block{b}") for b in range(self.depth)]

    def forward(
        self,
        x: torch.Tensor,
        messengers: Optional[torch.Tensor],
        num_frames: int,
        shift_plan: Optional[Sequence[Tuple[str, int]]],
        per_block: bool,
    ) -> Tuple[TokenGrid, Optional[torch.Tensor]]:
        pixel = self.embed(x)
        if messengers is None:
            joint = JointTokens(pixel)
            for block in self.blocks:
                joint = block(joint)
            return TokenGrid(self.norm(joint.pixel.tokens), pixel.spatial_dims), None

        n, m, _ = messengers.shape
        batch = n // num_frames

        def shift(tokens: torch.Tensor, inverse: bool) -> torch.Tensor:
            if shift_plan is None:
                return tokens
            framed = tokens.reshape(batch, num_frames, m, tokens.shape[-1])
            return shift_tokens(framed, shift_plan, inverse=inverse).reshape(n, m, -1)

        messengers = self.messenger_proj(messengers)
        joint = JointTokens(pixel, messengers)
        if not per_block:
            joint = JointTokens(joint.pixel, shift(joint.messenger, False))
        for block in self.blocks:
            if per_block:
                joint = JointTokens(joint.pixel, shift(joint.messenger, False))
            joint = block(joint)
            if per_block:
                joint = JointTokens(joint.pixel, shift(joint.messenger, True))
        if not per_block:
            joint = JointTokens(joint.pixel, shift(joint.messenger, True))
        pixel = TokenGrid(self.norm(joint.pixel.tokens), pixel.spatial_dims)
        return pixel, self.messenger_norm(joint.messenger)


@dataclass
class EncoderOutput:
    features: List[torch.Tensor]  # per stage (B, T, L_l, C_l)
    spatial_dims: List[Tuple[int, int]]
    messengers: Optional[torch.Tensor]  # (B, T, M, C_last)

    def feature_map(self, stage: int) -> torch.Tensor:
        """Stage features (1-based index) as (B*T, C, h, w)."""
        f = self.features[stage - 1]
        b, t, _, c = f.shape
        h, w = self.spatial_dims[stage - 1]
        return f.reshape(b * t, h, w, c).permute(0, 3, 1, 2)


class VideoEncoder(nn.Module):
    def __init__(
        self,
        config: EncoderConfig,
        shift_plan: Optional[Sequence[Tuple[str, int]]] = DEFAULT_SHIFT_PLAN,
        shift_per_block: bool = False,
        use_messengers: bool = True,
        in_chans: int = 3,
    ):
        super().__init__()
        config.validate()
        self.config = config
        self.shift_plan = validate_plan(shift_plan) if shift_plan is not None else None
        self.shift_per_block = shift_per_block
        self.use_messengers = use_messengers
        prev = in_chans
        for l in range(config.num_stages):
            first = l == 0
            self.add_module(
                f"stage{l + 1}",
                EncoderStage(
                    in_chans=prev,
                    dim=config.channels[l],
                    depth=config.blocks_per_stage[l],
                    num_heads=config.heads[l],
                    ratios=config.reduction_ratios[l],
                    mlp_ratio=config.mlp_ratios[l],
                    kernel=config.stem_kernel if first else config.merge_kernel,
                    stride=config.stem_stride if first else config.merge_stride,
                    padding=config.stem_padding if first else config.merge_padding,
                    messenger_in=(config.channels[max(l - 1, 0)] if use_messengers else None),
                ),
            )
            prev = config.channels[l]
        self.apply(init_weights)

    @property
    def stages(self) -> List[EncoderStage]:
        return [getattr(self, f"stage{l + 1}") for l in range(self.config.num_stages)]

    def forward(
        self, frames: torch.Tensor, messengers: Optional[torch.Tensor] = None
    ) -> EncoderOutput:
        if frames.dim() != 5:
            raise ShapeError(f"expected (B, T, C, H, W) frames, got {tuple(frames.shape)}")
        b, t, c, h, w = frames.shape
        stride = self.config.total_stride
        if h % stride or w % stride:
            raise ShapeError(f"{h}x{w} frames are not divisible by the encoder stride {stride}")
        if self.use_messengers and messengers is None:
            raise ShapeError("encoder built with messengers needs messenger tokens")
        x = frames.reshape(b * t, c, h, w)
        m = None
        if self.use_messengers:
            m = messengers.reshape(b * t, messengers.shape[2], messengers.shape[3])
        features, dims = [], []
        for stage in self.stages:
            grid, m = stage(x, m, t, self.shift_plan, self.shift_per_block)
            features.append(grid.tokens.reshape(b, t, grid.tokens.shape[1], -1))
            dims.append(grid.spatial_dims)
            x = grid.to_map()
        if m is not None:
            m = m.reshape(b, t, m.shape[1], m.shape[2])
        return EncoderOutput(features, dims, m)


def clip_to_tensor(frames: np.ndarray) -> torch.Tensor:
    """(T, H, W, 3) numpy frames -> (1, T, 3, H, W) float tensor."""
    return torch.from_numpy(np.ascontiguousarray(frames)).permute(0, 3, 1, 2).unsqueeze(0).float()


def encode(encoder: VideoEncoder, frames, messengers=None) -> EncoderOutput:
    """Run the encoder on a clip; numpy (T, H, W, 3) clips are batched as one."""
    if isinstance(frames, np.ndarray):
        frames = clip_to_tensor(frames)
    if hasattr(messengers, "tokens") and not isinstance(messengers, torch.Tensor):
        messengers = messengers.tokens
    if messengers is not None and messengers.dim() == 3:
        messengers = messengers.unsqueeze(0).expand(frames.shape[0], -1, -1, -1)
    return encoder(frames, messengers)


def interpolate_like(x: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)
