"""Gradient supplementary module: injects the pooled gradient pyramid into each stage output."""

from __future__ import annotations

from enum import Enum

import torch
import torch.nn as nn
import torch.nn.functional as F


class GsmMode(str, Enum):
    M_G_RES = "m_g_res"
    M_G_ADD = "m_g_add"
    M_G_M_RES = "m_g_m_res"


class GBlock(nn.Module):
    """Two conv-BN-ReLU layers lifting a gradient map to ``out_channels``."""

    def __init__(self, out_channels: int, in_channels: int = 1):
        super().__init__()
        self.in_channels = in_channels
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)

    def forward(self, grad: torch.Tensor) -> torch.Tensor:
        if grad.shape[1] != self.in_channels:
            raise ValueError(f"G_Block expects {self.in_channels} channel(s), got {grad.shape[1]}")
        x = F.relu(self.bn1(self.conv1(grad)))
        return F.relu(self.bn2(self.conv2(x)))


class ResFuse(nn.Module):
    """``s = main + gradfeat; out = s + body(s)`` with a two-conv body."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, main: torch.Tensor, gradfeat: torch.Tensor) -> torch.Tensor:
        if main.shape != gradfeat.shape:
            raise ValueError(f"shape mismatch: main {tuple(main.shape)} vs gradient {tuple(gradfeat.shape)}")
        s = main + gradfeat
        body = F.relu(self.bn1(self.conv1(s)))
        body = F.relu(self.bn2(self.conv2(body)))
        return s + body


class GsmLevel(nn.Module):
    def __init__(self, channels: int, mode: GsmMode, shared_channels: int | None = None):
        super().__init__()
        self.mode = GsmMode(mode)
        if self.mode is GsmMode.M_G_M_RES:
            # pooled shared features need a channel adapter when widths differ
            if shared_channels != channels:
                self.adapt = nn.Conv2d(shared_channels, channels, 1, bias=False)
            else:
                self.adapt = None
        else:
            self.gblock = GBlock(channels)
        if self.mode is not GsmMode.M_G_ADD:
            self.res = ResFuse(channels)

    def forward(self, main: torch.Tensor, supplement: torch.Tensor) -> torch.Tensor:
        if main.shape[-2:] != supplement.shape[-2:]:
            raise ValueError(
                f"supplement spatial size {tuple(supplement.shape[-2:])} != main {tuple(main.shape[-2:])}"
            )
        if self.mode is GsmMode.M_G_M_RES:
            feat = supplement if self.adapt is None else self.adapt(supplement)
            return self.res(main, feat)
        feat = self.gblock(supplement)
        if self.mode is GsmMode.M_G_ADD:
            if feat.shape != main.shape:
                raise ValueError(f"shape mismatch: main {tuple(main.shape)} vs gradient {tuple(feat.shape)}")
            return main + feat
        return self.res(main, feat)


class GSM(nn.Module):
    """Per-scale gradient injection for all five encoder levels.

    ``M_G_RES`` and ``M_G_ADD`` run one G_Block per level on the max-pooled
    gradient image. ``M_G_M_RES`` runs a single shared G_Block at full
    resolution and max-pools its features down the pyramid instead.
    """

    def __init__(self, channels, mode: GsmMode = GsmMode.M_G_RES):
        super().__init__()
        self.mode = GsmMode(mode)
        self.channels = list(channels)
        shared = self.channels[0]
        if self.mode is GsmMode.M_G_M_RES:
            self.shared_gblock = GBlock(shared)
        for i, c in enumerate(self.channels, start=1):
            self.add_module(f"level{i}", GsmLevel(c, self.mode, shared))

    def supplements(self, base: torch.Tensor) -> list[torch.Tensor]:
        """Per-level supplementary inputs from the full-resolution gradient image."""
        if self.mode is GsmMode.M_G_M_RES:
            x = self.shared_gblock(base)
        else:
            x = base
        out = [x]
        for _ in range(len(self.channels) - 1):
            x = F.max_pool2d(x, 2)
            out.append(x)
        return out

    def apply_level(self, index: int, main: torch.Tensor, supplement: torch.Tensor) -> torch.Tensor:
        return getattr(self, f"level{index + 1}")(main, supplement)
