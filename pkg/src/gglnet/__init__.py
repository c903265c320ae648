"""Gradient-guided learning network for single-frame infrared small-target segmentation."""

from .model import GGLNet, VariantConfig, build_model, soft_iou_loss, train_step
from .preprocess import build_pyramid, gradient_magnitude

__all__ = [
    "GGLNet",
    "VariantConfig",
    "build_model",
    "build_pyramid",
    "gradient_magnitude",
    "soft_iou_loss",
    "train_step",
]
__version__ = "0.1.0"
