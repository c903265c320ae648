"""Training loop, batched prediction, and per-epoch logging."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .metrics import evaluate
from .model import GGLNet, make_optimizer, train_step

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "loss", "iou", "niou", "pd", "fa"]


def stack_samples(samples, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """List of (image, mask) 2-D arrays -> ``[N, 1, H, W]`` image and mask tensors."""
    imgs = np.stack([np.asarray(s[0], dtype=np.float64) for s in samples])[:, None]
    masks = np.stack([np.asarray(s[1], dtype=np.float64) for s in samples])[:, None]
    return torch.as_tensor(imgs, dtype=dtype), torch.as_tensor(masks, dtype=dtype)


@torch.no_grad()
def predict(model: GGLNet, images: torch.Tensor, batch_size: int = 8) -> np.ndarray:
    """Score maps ``[N, H, W]`` in eval mode."""
    was_training = model.training
    model.eval()
    out = []
    for i in range(0, images.shape[0], batch_size):
        out.append(model(images[i : i + batch_size])[:, 0].cpu().numpy())
    model.train(was_training)
    return np.concatenate(out)


def fit(
    model: GGLNet,
    train_samples,
    epochs: int = 500,
    batch_size: int = 4,
    lr: float = 1e-4,
    seed: int = 0,
    eval_samples=None,
    threshold: float = 0.5,
    match_dist: float = 3.0,
    log_path=None,
    checkpoint_path=None,
) -> list[dict]:
    """Train with Adam on the softIoU loss.

    When ``eval_samples`` are given each epoch is scored on them, and the
    checkpoint with the best nIoU so far is written to ``checkpoint_path``.
    Without them the last epoch is checkpointed.
    """
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    images, masks = stack_samples(train_samples)
    if eval_samples is not None:
        eval_images, _ = stack_samples(eval_samples)
        eval_masks = [np.asarray(s[1]) for s in eval_samples]
    optimizer = make_optimizer(model, lr)
    history = []
    best = -math.inf
    writer = fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
    try:
        n = images.shape[0]
        for epoch in range(1, epochs + 1):
            order = torch.as_tensor(rng.permutation(n))
            losses = []
            for i in range(0, n, batch_size):
                idx = order[i : i + batch_size]
                losses.append(train_step(model, optimizer, images[idx], masks[idx]))
            row = {"epoch": epoch, "loss": float(np.mean(losses))}
            if eval_samples is not None:
                report = evaluate(predict(model, eval_images), eval_masks, threshold, match_dist)
                row.update(iou=report.iou, niou=report.niou, pd=report.pd, fa=report.fa)
                if checkpoint_path is not None and report.niou > best:
                    best = report.niou
                    save_checkpoint(model, checkpoint_path)
            else:
                row.update(iou="", niou="", pd="", fa="")
            history.append(row)
            log.info("epoch %d loss %.4f niou %s", epoch, row["loss"], row["niou"])
            if writer is not None:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    if checkpoint_path is not None and (eval_samples is None or best == -math.inf):
        save_checkpoint(model, checkpoint_path)
    return history
