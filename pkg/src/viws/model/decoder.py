"""
Messenger-driven video decoder.

Final-stage messengers query the final-stage pixel features for residual
weather evidence; the pixels then re-query the refined messengers, giving a
spatial weather-specific map r. A convolutional pyramid merges r with the
hierarchical encoder features into a per-frame residual that is subtracted
from the input frames. Three 3D convolutions fuse the per-frame recoveries
into the target frame, and a small messenger-free network refines it.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from viws.config import DecoderConfig, EncoderConfig
from viws.errors import ConfigurationError, ShapeError
from viws.model.encoder import EncoderOutput, EncoderStage, init_weights, interpolate_like

logger = logging.getLogger(__name__)


class CrossAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ConfigurationError(f"width {dim} is not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, 2 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, queries: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        n, s, c = queries.shape
        hd = c // self.num_heads
        q = self.q(queries).reshape(n, s, self.num_heads, hd).transpose(1, 2)
        kv = self.kv(context).reshape(n, -1, 2, self.num_heads, hd).permute(2, 0, 3, 1, 4)
        attn = ((q @ kv[0].transpose(-2, -1)) * self.scale).softmax(dim=-1)
        return self.proj((attn @ kv[1]).transpose(1, 2).reshape(n, s, c))


class RetrievalBlock(nn.Module):
    """Queries attend to the pixel tokens, followed by a feed-forward layer."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = CrossAttention(dim, num_heads)
        self.norm_ffn = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio), nn.GELU(), nn.Linear(dim * mlp_ratio, dim)
        )

    def forward(self, queries: torch.Tensor, pixels: torch.Tensor) -> torch.Tensor:
        queries = queries + self.attn(self.norm_q(queries), self.norm_kv(pixels))
        return queries + self.ffn(self.norm_ffn(queries))


class WeatherRetrieval(nn.Module):
    def __init__(self, dim: int, num_heads: int, num_blocks: int):
        super().__init__()
        self.blocks = nn.ModuleList([RetrievalBlock(dim, num_heads) for _ in range(num_blocks)])
        self.norm_pixels = nn.LayerNorm(dim)
        self.norm_messengers = nn.LayerNorm(dim)
        self.back = CrossAttention(dim, num_heads)
        self.out_proj = nn.Linear(dim, dim)
        # test hook: messenger indices zeroed before retrieval
        self.masked_tokens: Optional[Sequence[int]] = None

    def forward(self, pixels: torch.Tensor, messengers: torch.Tensor) -> torch.Tensor:
        """(N, L, C) pixels and (N, M, C) messengers -> r of shape (N, L, C)."""
        if pixels.shape[0] != messengers.shape[0] or pixels.shape[-1] != messengers.shape[-1]:
            raise ShapeError(
                f"pixels {tuple(pixels.shape)} and messengers {tuple(messengers.shape)} do not match"
            )
        if self.masked_tokens:
            keep = torch.ones(messengers.shape[1], 1, dtype=messengers.dtype, device=messengers.device)
            keep[list(self.masked_tokens)] = 0
            messengers = messengers * keep
        for block in self.blocks:
            messengers = block(messengers, pixels)
        retrieved = self.back(self.norm_pixels(pixels), self.norm_messengers(messengers))
        return self.out_proj(retrieved)


class ResidualConvPair(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))


class ProjectionPyramid(nn.Module):
    """
    Top-down fusion of hierarchical features into a 3-channel residual.

    Level widths follow fusion_channels from the coarsest stage down; after
    the finest stage the map is upsampled x2 until it reaches the input size.
    """

    def __init__(
        self,
        stage_channels: Sequence[int],
        fusion_channels: Sequence[int],
        extra_channels: int,
        stem_stride: int,
    ):
        super().__init__()
        if len(stage_channels) != len(fusion_channels):
            raise ConfigurationError("one fusion width per encoder stage is required")
        top = len(stage_channels) - 1
        self.top = nn.Conv2d(stage_channels[top] + extra_channels, fusion_channels[0], 1)
        self.top_res = ResidualConvPair(fusion_channels[0])
        self.reduce = nn.ModuleList()
        self.res = nn.ModuleList()
        for i, stage in enumerate(range(top - 1, -1, -1), start=1):
            self.reduce.append(
                nn.Conv2d(fusion_channels[i - 1] + stage_channels[stage], fusion_channels[i], 1)
            )
            self.res.append(ResidualConvPair(fusion_channels[i]))
        width = fusion_channels[-1]
        self.extra = nn.ModuleList(
            [ResidualConvPair(width) for _ in range(int(round(math.log2(stem_stride))))]
        )
        self.head = nn.Conv2d(width, 3, 3, 1, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(
        self, features: List[torch.Tensor], extra: Optional[torch.Tensor], size: Tuple[int, int]
    ) -> torch.Tensor:
        """features: per-stage (N, C_l, h_l, w_l) maps; extra: (N, C, h, w) at the top level."""
        x = features[-1]
        if extra is not None:
            if extra.shape[-2:] != x.shape[-2:]:
                raise ShapeError(
                    f"weather map {tuple(extra.shape[-2:])} does not match stage grid {tuple(x.shape[-2:])}"
                )
            x = torch.cat([x, extra], dim=1)
        x = self.top_res(self.top(x))
        for reduce, res, skip in zip(self.reduce, self.res, reversed(features[:-1])):
            if skip.shape[-2] != 2 * x.shape[-2] or skip.shape[-1] != 2 * x.shape[-1]:
                raise ShapeError(
                    f"skip features {tuple(skip.shape[-2:])} are not twice {tuple(x.shape[-2:])}"
                )
            x = interpolate_like(x, skip.shape[-2:])
            x = res(reduce(torch.cat([x, skip], dim=1)))
        for res in self.extra:
            x = res(interpolate_like(x, (x.shape[-2] * 2, x.shape[-1] * 2)))
        if tuple(x.shape[-2:]) != tuple(size):
            raise ShapeError(f"pyramid output {tuple(x.shape[-2:])} does not reach {tuple(size)}")
        return self.head(x)


def subtract_residual(frames: torch.Tensor, residual: torch.Tensor) -> torch.Tensor:
    return torch.clamp(frames - residual, 0.0, 1.0)


class TemporalFusion(nn.Module):
    """Three 3D convolutions collapsing (B, T, 3, H, W) recoveries to the center frame."""

    def __init__(self, channels: int, kernel: Sequence[int]):
        super().__init__()
        padding = tuple(k // 2 for k in kernel)
        self.conv1 = nn.Conv3d(3, channels, kernel, 1, padding)
        self.conv2 = nn.Conv3d(channels, channels, kernel, 1, padding)
        self.conv3 = nn.Conv3d(channels, 3, kernel, 1, padding)
        self.act = nn.GELU()
        nn.init.zeros_(self.conv3.weight)
        nn.init.zeros_(self.conv3.bias)

    def forward(self, recoveries: torch.Tensor) -> torch.Tensor:
        t = recoveries.shape[1]
        if t < 3:
            raise ConfigurationError(f"temporal fusion needs at least 3 frames, got {t}")
        x = recoveries.transpose(1, 2)  # (B, 3, T, H, W)
        x = self.conv3(self.act(self.conv2(self.act(self.conv1(x)))))
        return torch.clamp(recoveries[:, t // 2] + x[:, :, t // 2], 0.0, 1.0)


class RefineNet(nn.Module):
    """Single-frame, messenger-free encoder plus projection pyramid."""

    def __init__(self, encoder: EncoderConfig, decoder: DecoderConfig):
        super().__init__()
        stages = decoder.refine_stages
        channels = [max(4, int(c * decoder.refine_scale)) for c in encoder.channels[:stages]]
        self.stride = encoder.stem_stride * encoder.merge_stride ** (stages - 1)
        prev = 3
        for l, dim in enumerate(channels):
            first = l == 0
            self.add_module(
                f"stage{l + 1}",
                EncoderStage(
                    in_chans=prev,
                    dim=dim,
                    depth=1,
                    num_heads=1,
                    ratios=encoder.reduction_ratios[l],
                    mlp_ratio=2,
                    kernel=encoder.stem_kernel if first else encoder.merge_kernel,
                    stride=encoder.stem_stride if first else encoder.merge_stride,
                    padding=encoder.stem_padding if first else encoder.merge_padding,
                    messenger_in=None,
                ),
            )
            prev = dim
        self.num_stages = stages
        self.pyramid = ProjectionPyramid(channels, channels[::-1], 0, encoder.stem_stride)
        self.apply(init_weights)
        nn.init.zeros_(self.pyramid.head.weight)
        nn.init.zeros_(self.pyramid.head.bias)

    def forward(self, frame: torch.Tensor) -> torch.Tensor:
        x, maps = frame, []
        for l in range(self.num_stages):
            grid, _ = getattr(self, f"stage{l + 1}")(x, None, 1, None, False)
            x = grid.to_map()
            maps.append(x)
        residual = self.pyramid(maps, None, frame.shape[-2:])
        return torch.clamp(frame + residual, 0.0, 1.0)


@dataclass
class DecoderOutput:
    recoveries: torch.Tensor  # (B, T, 3, H, W)
    fused: torch.Tensor  # (B, 3, H, W)
    weather_map: Optional[torch.Tensor]  # (B, T, L, C) retrieved r


class VideoDecoder(nn.Module):
    def __init__(
        self,
        encoder: EncoderConfig,
        config: DecoderConfig,
        use_retrieval: bool = True,
        num_queries: int = 0,
        use_temporal_fusion: bool = True,
    ):
        """
        :param num_queries: when > 0, retrieval uses this many learnable
            queries instead of the encoder's messengers
        """
        super().__init__()
        top = encoder.channels[-1]
        self.retrieval = WeatherRetrieval(top, config.heads, config.num_blocks) if use_retrieval else None
        self.queries = None
        if use_retrieval and num_queries > 0:
            self.queries = nn.Parameter(torch.empty(num_queries, top))
            nn.init.trunc_normal_(self.queries, std=0.02)
        self.pyramid = ProjectionPyramid(
            encoder.channels, config.fusion_channels, top if use_retrieval else 0, encoder.stem_stride
        )
        self.fusion = TemporalFusion(config.temporal_channels, config.temporal_kernel) if use_temporal_fusion else None
        self.apply(init_weights)
        nn.init.zeros_(self.pyramid.head.weight)
        nn.init.zeros_(self.pyramid.head.bias)
        if self.fusion is not None:
            nn.init.zeros_(self.fusion.conv3.weight)
            nn.init.zeros_(self.fusion.conv3.bias)

    def retrieve_weather_feature(self, encoded: EncoderOutput) -> torch.Tensor:
        f = encoded.features[-1]
        b, t, l, c = f.shape
        if self.queries is not None:
            messengers = self.queries.unsqueeze(0).expand(b * t, -1, -1)
        elif encoded.messengers is None:
            raise ShapeError("retrieval needs messenger tokens or learnable queries")
        else:
            messengers = encoded.messengers.reshape(b * t, -1, c)
        return self.retrieval(f.reshape(b * t, l, c), messengers).reshape(b, t, l, c)

    def project_and_subtract(
        self, frames: torch.Tensor, encoded: EncoderOutput, weather_map: Optional[torch.Tensor]
    ) -> torch.Tensor:
        b, t, _, h, w = frames.shape
        maps = [encoded.feature_map(l + 1) for l in range(len(encoded.features))]
        extra = None
        if weather_map is not None:
            gh, gw = encoded.spatial_dims[-1]
            extra = weather_map.reshape(b * t, gh, gw, -1).permute(0, 3, 1, 2)
        residual = self.pyramid(maps, extra, (h, w))
        return subtract_residual(frames, residual.reshape(b, t, 3, h, w))

    def forward(self, frames: torch.Tensor, encoded: EncoderOutput) -> DecoderOutput:
        weather_map = self.retrieve_weather_feature(encoded) if self.retrieval is not None else None
        recoveries = self.project_and_subtract(frames, encoded, weather_map)
        if self.fusion is not None:
            fused = self.fusion(recoveries)
        else:
            fused = recoveries[:, recoveries.shape[1] // 2]
        return DecoderOutput(recoveries, fused, weather_map)


def temporal_fusion(recoveries: torch.Tensor, fusion: TemporalFusion) -> torch.Tensor:
    """Fuse (T, 3, H, W) or (B, T, 3, H, W) recoveries."""
    if recoveries.dim() == 4:
        return fusion(recoveries.unsqueeze(0))[0]
    return fusion(recoveries)


def refine(initial: torch.Tensor, net: RefineNet) -> torch.Tensor:
    if initial.dim() == 3:
        return net(initial.unsqueeze(0))[0]
    return net(initial)
