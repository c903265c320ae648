"""Main-branch encoder: five Stages of residual conv blocks with SE attention."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

DEFAULT_CHANNELS = (16, 32, 64, 128, 256)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StageConfig:
    in_channels: int
    out_channels: int
    se_ratio: int = 4

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.se_ratio < 1 or self.out_channels % self.se_ratio:
            raise ConfigError(
                f"out_channels={self.out_channels} not divisible by se_ratio={self.se_ratio}"
            )


def stage_plan(in_channels: int = 1, channels=DEFAULT_CHANNELS, se_ratio: int = 4) -> list[StageConfig]:
    plan = []
    prev = in_channels
    for c in channels:
        plan.append(StageConfig(prev, c, se_ratio))
        prev = c
    return plan


def conv_bn_relu(in_channels: int, out_channels: int) -> list[nn.Module]:
    return [
        nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=False),
    ]


class SEAttention(nn.Module):
    """Squeeze-and-excitation channel gate."""

    def __init__(self, channels: int, ratio: int = 4):
        super().__init__()
        if ratio < 1 or channels % ratio:
            raise ConfigError(f"channels={channels} not divisible by SE ratio {ratio}")
        self.fc1 = nn.Linear(channels, channels // ratio)
        self.fc2 = nn.Linear(channels // ratio, channels)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        squeezed = x.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(squeezed))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)[:, :, None, None]


class ConvBlock(nn.Module):
    """Two conv-BN-ReLU layers, SE on the body, then residual add.

    A 1x1 projection carries the skip path when the channel count changes.
    """

    def __init__(self, in_channels: int, out_channels: int, se_ratio: int = 4):
        super().__init__()
        self.in_channels = in_channels
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.se = SEAttention(out_channels, se_ratio)
        if in_channels != out_channels:
            self.proj = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        else:
            self.proj = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        body = F.relu(self.bn1(self.conv1(x)))
        body = F.relu(self.bn2(self.conv2(body)))
        body = self.se(body)
        skip = x if self.proj is None else self.proj(x)
        return body + skip


class Stage(nn.Module):
    def __init__(self, cfg: StageConfig):
        super().__init__()
        self.cfg = cfg
        self.block1 = ConvBlock(cfg.in_channels, cfg.out_channels, cfg.se_ratio)
        self.block2 = ConvBlock(cfg.out_channels, cfg.out_channels, cfg.se_ratio)
        self.block3 = ConvBlock(cfg.out_channels, cfg.out_channels, cfg.se_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block3(self.block2(self.block1(x)))


class Encoder(nn.Module):
    """Five Stages with 2x2 max pooling between consecutive stages.

    ``after_stage`` lets a caller rewrite each stage output (e.g. gradient
    injection) before it is stored and pooled for the next stage.
    """

    def __init__(self, stages: list[StageConfig]):
        super().__init__()
        if len(stages) != 5:
            raise ConfigError(f"encoder needs 5 stage configs, got {len(stages)}")
        for prev, nxt in zip(stages, stages[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ConfigError("consecutive stage configs do not chain")
        self.configs = list(stages)
        for i, cfg in enumerate(stages, start=1):
            self.add_module(f"stage{i}", Stage(cfg))

    @property
    def channels(self) -> list[int]:
        return [cfg.out_channels for cfg in self.configs]

    def forward(self, x: torch.Tensor, after_stage=None) -> list[torch.Tensor]:
        h, w = x.shape[-2:]
        if h % 16 or w % 16:
            raise ValueError(f"spatial size {h}x{w} must be divisible by 16")
        feats = []
        for i in range(5):
            if i:
                x = F.max_pool2d(x, 2)
            x = getattr(self, f"stage{i + 1}")(x)
            if after_stage is not None:
                x = after_stage(i, x)
            feats.append(x)
        return feats


def init_weights(module: nn.Module) -> None:
    """Fan-in scaled normal init for convs, zero biases, unit BN scale."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Linear):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
