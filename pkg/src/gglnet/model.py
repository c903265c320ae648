"""Full network assembly, softIoU loss, and the ablation variant matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import DEFAULT_CHANNELS, ConfigError, ConvBlock, Encoder, count_parameters, init_weights, stage_plan
from .gsm import GSM, GsmMode, ResFuse
from .lcl import LclConfig, LocalContrastLevels
from .preprocess import GRADIENT_OPERATORS
from .tgfm import TGFM, FusionMode, TgfmConfig, TgfmLevels

log = logging.getLogger(__name__)


class BranchInput(str, Enum):
    NONE = "none"
    ORIGINAL = "original"
    GRADIENT = "gradient"


@dataclass(frozen=True)
class VariantConfig:
    main_input: BranchInput = BranchInput.ORIGINAL
    supp_input: BranchInput = BranchInput.GRADIENT
    gsm_mode: GsmMode = GsmMode.M_G_RES
    fusion_mode: FusionMode = FusionMode.TGFM
    lcl: LclConfig = field(default_factory=LclConfig)
    channels: tuple = DEFAULT_CHANNELS
    se_ratio: int = 4
    r: int = 8

    def __post_init__(self):
        object.__setattr__(self, "main_input", BranchInput(self.main_input))
        object.__setattr__(self, "supp_input", BranchInput(self.supp_input))
        object.__setattr__(self, "gsm_mode", GsmMode(self.gsm_mode))
        object.__setattr__(self, "fusion_mode", FusionMode(self.fusion_mode))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.main_input is BranchInput.NONE:
            raise ConfigError("main branch needs an input")
        if len(self.channels) != 5:
            raise ConfigError("exactly five stage widths are required")
        for c in self.channels[:4]:
            if c % self.r:
                raise ConfigError(f"fusion width {c} not divisible by r={self.r}")


# name -> (table, scheme string as printed in the ablation tables, overrides)
SCHEMES = {
    "original": ("I", "Original", dict(main_input="original", supp_input="none")),
    "gradient": ("I", "Gradient", dict(main_input="gradient", supp_input="none")),
    "original+original": ("I", "Original+Original", dict(main_input="original", supp_input="original")),
    "gradient+gradient": ("I", "Gradient+Gradient", dict(main_input="gradient", supp_input="gradient")),
    "gradient+original": ("I", "Gradient+Original", dict(main_input="gradient", supp_input="original")),
    "original+gradient": ("I", "Original+Gradient (GGL-Net)", {}),
    "m_g_add": ("II", "M_G_Add", dict(gsm_mode="m_g_add")),
    "m_g_m_res": ("II", "M-G-M_Res", dict(gsm_mode="m_g_m_res")),
    "m_g_res": ("II", "M_G_Res (GGL-Net)", {}),
    "add": ("III", "ADD", dict(fusion_mode="add")),
    "cam": ("III", "CAM", dict(fusion_mode="cam")),
    "sam": ("III", "SAM", dict(fusion_mode="sam")),
    "tgfm": ("III", "TGFM", {}),
}


def variant_for(name: str, base: VariantConfig | None = None) -> VariantConfig:
    key = name.strip().lower()
    if key not in SCHEMES:
        raise KeyError(f"unknown variant {name!r}; valid names: {', '.join(SCHEMES)}")
    return replace(base or VariantConfig(), **SCHEMES[key][2])


def image_gradient(img: torch.Tensor, operator: str = "sobel") -> torch.Tensor:
    """Batched gradient magnitude of ``[N, 1, H, W]`` images, each normalized by its own max."""
    (a, b, c), (d0, _, d2) = GRADIENT_OPERATORS[operator]
    p = F.pad(img, (1, 1, 1, 1), mode="replicate")
    dx = d0 * p[..., :, :-2] + d2 * p[..., :, 2:]
    dy = d0 * p[..., :-2, :] + d2 * p[..., 2:, :]
    gx = a * dx[..., :-2, :] + b * dx[..., 1:-1, :] + c * dx[..., 2:, :]
    gy = a * dy[..., :, :-2] + b * dy[..., :, 1:-1] + c * dy[..., :, 2:]
    mag = torch.sqrt(gx**2 + gy**2)
    peak = mag.amax(dim=(1, 2, 3), keepdim=True)
    return torch.where(peak > 0, mag / torch.where(peak > 0, peak, torch.ones_like(peak)), mag)


class GGLNet(nn.Module):
    """Dual-branch encoder, per-scale local contrast, and TGFM decoder.

    Checkpoint names are stable: ``main.stageK.blockJ.*``, ``gsm.levelK.*``,
    ``lcl.levelK.*``, ``tgfm.levelK.*``, ``head.*``.
    """

    def __init__(self, variant: VariantConfig = VariantConfig()):
        super().__init__()
        self.variant = variant
        ch = variant.channels
        self.main = Encoder(stage_plan(1, ch, variant.se_ratio))
        self.gsm = GSM(ch, variant.gsm_mode) if variant.supp_input is not BranchInput.NONE else None
        self.lcl = LocalContrastLevels(ch, variant.lcl)
        self.tgfm = TgfmLevels(ch, TgfmConfig(variant.r, variant.fusion_mode))
        self.head = nn.Conv2d(ch[0], 1, 1)

    def _branch(self, which: BranchInput, img: torch.Tensor, grad: torch.Tensor) -> torch.Tensor:
        return grad if which is BranchInput.GRADIENT else img

    def encode(self, img: torch.Tensor) -> list[torch.Tensor]:
        if img.ndim != 4 or img.shape[1] != 1:
            raise ValueError(f"expected [N, 1, H, W] input, got {tuple(img.shape)}")
        v = self.variant
        need_grad = BranchInput.GRADIENT in (v.main_input, v.supp_input)
        grad = image_gradient(img) if need_grad else None
        x = self._branch(v.main_input, img, grad)
        if self.gsm is None:
            return self.main(x)
        supplements = self.gsm.supplements(self._branch(v.supp_input, img, grad))
        return self.main(x, after_stage=lambda i, f: self.gsm.apply_level(i, f, supplements[i]))

    def decode(self, feats: list[torch.Tensor]) -> torch.Tensor:
        return torch.sigmoid(self.head(self.tgfm(feats)))

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        return self.decode(self.lcl(self.encode(img)))

    def num_parameters(self) -> int:
        return count_parameters(self)


HEAD_PRIOR = 0.01


def init_gglnet(model: GGLNet, prior: float = HEAD_PRIOR) -> GGLNet:
    """Fan-in init, residual bodies starting at zero, head starting at ``prior`` everywhere.

    Zeroing the last BN scale of each residual body and the head weight keeps
    start-up logits at ``logit(prior)``; otherwise the unnormalized residual
    stream drives the sigmoid into saturation before training begins.

    The TGFM channel projections also start at zero, so each fusion begins as
    a gated copy of its low-level map. Coarse maps carry target responses
    tens of times their RMS, and upsampling them unscaled puts saturated
    false positives a pixel or two off target.
    """
    init_weights(model)
    for m in model.modules():
        if isinstance(m, (ConvBlock, ResFuse)):
            nn.init.zeros_(m.bn2.weight)
        elif isinstance(m, TGFM):
            nn.init.zeros_(m.align.weight)
    nn.init.zeros_(model.head.weight)
    nn.init.constant_(model.head.bias, math.log(prior / (1.0 - prior)))
    return model


def build_model(variant: VariantConfig = VariantConfig(), seed: int = 0, dtype=torch.float32) -> GGLNet:
    torch.manual_seed(seed)
    model = init_gglnet(GGLNet(variant))
    return model.to(dtype)


def soft_iou_loss(p: torch.Tensor, y: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """``1 - sum(p*y) / sum(p + y - p*y)``, averaged over the batch.

    4-D inputs are treated per sample; 2-D inputs as a single sample. ``eps``
    floors the denominator; a sample with p == 0 and y == 0 everywhere has
    loss 0.
    """
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: p {tuple(p.shape)} vs y {tuple(y.shape)}")
    y = y.to(p.dtype)
    if p.ndim <= 2:
        p, y = p.reshape(1, -1), y.reshape(1, -1)
    else:
        p, y = p.reshape(p.shape[0], -1), y.reshape(y.shape[0], -1)
    inter = (p * y).sum(dim=1)
    denom = (p + y - p * y).sum(dim=1)
    empty = denom <= 0
    if bool(empty.any()):
        log.info("softIoU: %d sample(s) with empty prediction and mask, loss set to 0", int(empty.sum()))
    ratio = torch.where(empty, torch.ones_like(inter), inter / denom.clamp_min(eps))
    return (1.0 - ratio).mean()


class NonFiniteLossError(RuntimeError):
    pass


def train_step(model: nn.Module, optimizer: torch.optim.Optimizer, images: torch.Tensor, masks: torch.Tensor) -> float:
    """One optimizer step on the softIoU loss; returns the pre-step loss."""
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss = soft_iou_loss(model(images), masks)
    value = loss.item()
    if not math.isfinite(value):
        raise NonFiniteLossError(
            f"non-finite loss {value} on batch of shape {tuple(images.shape)} "
            f"(input range [{images.min().item():.4g}, {images.max().item():.4g}])"
        )
    loss.backward()
    optimizer.step()
    return value


def make_optimizer(model: nn.Module, lr: float = 1e-4) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=lr, weight_decay=0.0)
