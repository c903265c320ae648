"""Two-way guidance fusion and the top-down decoder.

Low-level features X gate the upsampled high-level features Y spatially,
and Y gates X per channel:

    Z = C(Y) * X + S(X) * Y
    C(Y) = sigmoid(MLP(avgpool(Y)) + MLP(maxpool(Y)))
    S(X) = sigmoid(conv7x7([mean_c(X); max_c(X)]))
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import ConfigError


class FusionMode(str, Enum):
    TGFM = "tgfm"
    ADD = "add"
    CAM = "cam"
    SAM = "sam"


@dataclass(frozen=True)
class TgfmConfig:
    r: int = 8
    fusion_mode: FusionMode = FusionMode.TGFM

    def __post_init__(self):
        object.__setattr__(self, "fusion_mode", FusionMode(self.fusion_mode))
        if self.r < 1:
            raise ConfigError("r must be positive")


class ChannelAttention(nn.Module):
    """Channel gate ``[N, C, 1, 1]`` with one MLP shared by the avg and max paths."""

    def __init__(self, channels: int, r: int = 8):
        super().__init__()
        if channels % r:
            raise ConfigError(f"channels={channels} not divisible by r={r}")
        self.fc1 = nn.Linear(channels, channels // r)
        self.fc2 = nn.Linear(channels // r, channels)

    def mlp(self, v: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.relu(self.fc1(v)))

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        avg = y.mean(dim=(2, 3))
        mx = y.amax(dim=(2, 3))
        return torch.sigmoid(self.mlp(avg) + self.mlp(mx))[:, :, None, None]


class SpatialAttention(nn.Module):
    """Spatial gate ``[N, 1, H, W]`` from channel-wise mean and max."""

    def __init__(self, kernel: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel, padding=kernel // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


class TGFM(nn.Module):
    """Fuses a low-level map X with a high-level map Y.

    Y passes through a shape adapter (2x bilinear upsample, 1x1 channel
    projection) before fusion; :meth:`fuse` works on already-aligned maps.
    """

    def __init__(self, low_channels: int, high_channels: int | None = None, cfg: TgfmConfig = TgfmConfig()):
        super().__init__()
        self.cfg = cfg
        mode = cfg.fusion_mode
        high_channels = low_channels if high_channels is None else high_channels
        self.align = nn.Conv2d(high_channels, low_channels, 1, bias=False)
        if mode in (FusionMode.TGFM, FusionMode.CAM):
            self.cam = ChannelAttention(low_channels, cfg.r)
        if mode in (FusionMode.TGFM, FusionMode.SAM):
            self.sam = SpatialAttention()

    def adapt(self, y: torch.Tensor, size) -> torch.Tensor:
        if tuple(y.shape[-2:]) != tuple(size):
            y = F.interpolate(y, size=size, mode="bilinear", align_corners=False)
        return self.align(y)

    def fuse(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        if x.shape != y.shape:
            raise ValueError(f"post-adapter shape mismatch: X {tuple(x.shape)} vs Y {tuple(y.shape)}")
        mode = self.cfg.fusion_mode
        if mode is FusionMode.ADD:
            return x + y
        if mode is FusionMode.CAM:
            return self.cam(y) * x + y
        if mode is FusionMode.SAM:
            return x + self.sam(x) * y
        return self.cam(y) * x + self.sam(x) * y

    def forward(self, x_low: torch.Tensor, y_high: torch.Tensor) -> torch.Tensor:
        return self.fuse(x_low, self.adapt(y_high, x_low.shape[-2:]))


class TgfmLevels(nn.Module):
    """Top-down TGFM chain from the 1/16 scale back to full resolution."""

    def __init__(self, channels, cfg: TgfmConfig = TgfmConfig()):
        super().__init__()
        channels = list(channels)
        if len(channels) != 5:
            raise ConfigError("decoder expects five feature levels")
        for i in range(4):
            self.add_module(f"level{i + 1}", TGFM(channels[i], channels[i + 1], cfg))

    def forward(self, feats: list[torch.Tensor]) -> torch.Tensor:
        if len(feats) != 5:
            raise ValueError(f"decoder expects 5 feature maps, got {len(feats)}")
        d = feats[4]
        for i in (3, 2, 1, 0):
            d = getattr(self, f"level{i + 1}")(feats[i], d)
        return d


class Decoder(nn.Module):
    """TGFM chain followed by a 1x1 conv + sigmoid prediction head."""

    def __init__(self, channels, cfg: TgfmConfig = TgfmConfig()):
        super().__init__()
        self.tgfm = TgfmLevels(channels, cfg)
        self.head = nn.Conv2d(list(channels)[0], 1, 1)

    def forward(self, feats: list[torch.Tensor]) -> torch.Tensor:
        return torch.sigmoid(self.head(self.tgfm(feats)))
