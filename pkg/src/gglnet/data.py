"""Dataset IO, split rules, and a synthetic small-target generator.

On-disk layout (shared by real and synthetic data)::

    root/images/<id>.png   8-bit grayscale frames
    root/masks/<id>.png    8-bit binary masks (0 / 255)
    root/train.txt         newline-delimited ids
    root/test.txt
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

NUAA_SIZE = (512, 512)
NUDT_SIZE = (256, 256)


class DatasetError(IOError):
    pass


class SplitRatio(str, Enum):
    R1_1 = "1:1"
    R7_3 = "7:3"


@dataclass
class DatasetSpec:
    root: Path
    split: list[str]
    target_size: tuple[int, int] = NUDT_SIZE
    images_dir: str = "images"
    masks_dir: str = "masks"


def read_split(path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"split file not found: {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def write_split(path, ids) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in ids))


def _find(directory: Path, sample_id: str) -> Path:
    matches = sorted(p for p in directory.glob(f"{sample_id}.*") if p.stem == sample_id)
    if len(matches) != 1:
        raise DatasetError(f"expected exactly one file for id {sample_id!r} in {directory}, found {len(matches)}")
    return matches[0]


def load_pair(spec: DatasetSpec, sample_id: str) -> tuple[np.ndarray, np.ndarray]:
    root = Path(spec.root)
    img_path = _find(root / spec.images_dir, sample_id)
    mask_path = _find(root / spec.masks_dir, sample_id)
    with Image.open(img_path) as im:
        img = im.convert("L")
    with Image.open(mask_path) as im:
        mask = im.convert("L")
    if img.size != mask.size or 0 in img.size:
        raise DatasetError(f"{sample_id}: image size {img.size} does not match mask size {mask.size}")
    h, w = spec.target_size
    img_f = Image.fromarray(np.asarray(img, dtype=np.float32) / 255.0)
    if img_f.size != (w, h):
        img_f = img_f.resize((w, h), Image.BILINEAR)
    if mask.size != (w, h):
        mask = mask.resize((w, h), Image.NEAREST)
    pixels = np.clip(np.asarray(img_f, dtype=np.float64), 0.0, 1.0)
    binary = (np.asarray(mask, dtype=np.float64) / 255.0 >= 0.5).astype(np.uint8)
    return pixels, binary


def load_dataset(spec: DatasetSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    if not spec.split:
        raise DatasetError("empty split")
    return [load_pair(spec, i) for i in spec.split]


def split_dataset(ids, ratio: SplitRatio | str = SplitRatio.R7_3, seed: int = 0) -> tuple[list, list]:
    ids = list(ids)
    if len(ids) < 2:
        raise ValueError("need at least 2 ids to split")
    ratio = SplitRatio(ratio)
    n = len(ids)
    n_train = (n + 1) // 2 if ratio is SplitRatio.R1_1 else (7 * n + 9) // 10
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[k] for k in order]
    return shuffled[:n_train], shuffled[n_train:]


@dataclass
class SynthConfig:
    n_images: int = 200
    size: tuple[int, int] = (64, 64)
    targets_per_image: tuple[int, int] = (1, 3)
    target_sigma: tuple[float, float] = (1.0, 2.5)
    amplitude: tuple[float, float] = (0.4, 0.8)
    clutter_smoothness: float = 2.0
    seed: int = 0

    def __post_init__(self):
        self.size = tuple(int(s) for s in self.size)
        for name in ("targets_per_image", "target_sigma", "amplitude"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        if self.size[0] % 16 or self.size[1] % 16:
            raise ValueError(f"size {self.size} must be divisible by 16")
        if self.targets_per_image[0] < 0:
            raise ValueError("targets_per_image must be non-negative")
        # below this the half-max disc can miss every pixel center
        if self.target_sigma[0] < 0.61:
            raise ValueError("target_sigma must be >= 0.61 so every target covers a pixel")


def half_max_radius(sigma: float) -> float:
    return sigma * math.sqrt(2.0 * math.log(2.0))


def _place(rng, h, w, sigma, placed, margin=2.0, tries=100):
    """Sub-pixel center whose half-max disc stays clear of earlier targets."""
    cy = cx = 0.0
    for _ in range(tries):
        cy = rng.uniform(margin, h - 1 - margin)
        cx = rng.uniform(margin, w - 1 - margin)
        ok = all(
            math.hypot(cy - py, cx - px) > 3.0 * (sigma + ps) for py, px, ps in placed
        )
        if ok:
            break
    return cy, cx


def synth_generate(cfg: SynthConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Smoothed-noise clutter in [0, 0.4] plus Gaussian blob targets.

    Each mask marks where a blob on its own exceeds half of its peak.
    """
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = []
    for _ in range(cfg.n_images):
        noise = ndimage.gaussian_filter(rng.random((h, w)), cfg.clutter_smoothness, mode="reflect")
        lo, hi = noise.min(), noise.max()
        bg = 0.4 * (noise - lo) / (hi - lo) if hi > lo else np.zeros((h, w))
        img = bg.copy()
        mask = np.zeros((h, w), dtype=np.uint8)
        n_targets = int(rng.integers(cfg.targets_per_image[0], cfg.targets_per_image[1] + 1))
        placed = []
        for _ in range(n_targets):
            sigma = rng.uniform(*cfg.target_sigma)
            amp = rng.uniform(*cfg.amplitude)
            cy, cx = _place(rng, h, w, sigma, placed)
            placed.append((cy, cx, sigma))
            blob = amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
            img += blob
            mask[blob > 0.5 * amp] = 1
        out.append((np.clip(img, 0.0, 1.0), mask))
    return out


def write_dataset(samples, root, train_ids=None, test_ids=None, prefix: str = "img") -> list[str]:
    """Write samples in the standard layout; returns the generated ids."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    ids = []
    for k, (img, mask) in enumerate(samples):
        sid = f"{prefix}{k:05d}"
        ids.append(sid)
        Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)).save(root / "images" / f"{sid}.png")
        Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(root / "masks" / f"{sid}.png")
    if train_ids is not None:
        write_split(root / "train.txt", [ids[k] for k in train_ids])
    if test_ids is not None:
        write_split(root / "test.txt", [ids[k] for k in test_ids])
    return ids
