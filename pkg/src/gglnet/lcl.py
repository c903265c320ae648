"""Pluggable local-contrast-learning transform, one per encoder scale.

Any replacement must map a feature map to a same-shape feature map. The
default measures center-minus-surround contrast and adds a learned 1x1
projection of it back onto the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class LclConfig:
    enabled: bool = True
    kernel: int = 3

    def __post_init__(self):
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise ValueError(f"LCL kernel must be odd and >= 3, got {self.kernel}")


def local_contrast(x: torch.Tensor, kernel: int = 3) -> torch.Tensor:
    """``relu(x - mean_kxk(x))`` with replicate padding."""
    pad = kernel // 2
    padded = F.pad(x, (pad, pad, pad, pad), mode="replicate")
    return F.relu(x - F.avg_pool2d(padded, kernel, stride=1))


class LocalContrast(nn.Module):
    def __init__(self, channels: int, cfg: LclConfig = LclConfig()):
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Conv2d(channels, channels, 1) if cfg.enabled else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.proj is None:
            return x
        return x + self.proj(local_contrast(x, self.cfg.kernel))


class LocalContrastLevels(nn.Module):
    def __init__(self, channels, cfg: LclConfig = LclConfig()):
        super().__init__()
        for i, c in enumerate(channels, start=1):
            self.add_module(f"level{i}", LocalContrast(c, cfg))

    def forward(self, feats: list[torch.Tensor]) -> list[torch.Tensor]:
        return [getattr(self, f"level{i + 1}")(f) for i, f in enumerate(feats)]
