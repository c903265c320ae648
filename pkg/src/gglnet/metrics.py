"""Pixel-level (IoU, nIoU) and target-level (Pd, Fa) metrics, plus threshold-sweep ROC."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class MetricsError(ValueError):
    pass


def _binary(mask) -> np.ndarray:
    a = np.asarray(mask)
    a = a.reshape(a.shape[-2:]) if a.ndim > 2 else a
    if a.ndim != 2:
        raise MetricsError(f"expected a 2-D mask, got shape {np.shape(mask)}")
    return a.astype(bool)


def _pairs(preds, gts):
    preds, gts = list(preds), list(gts)
    if not preds:
        raise MetricsError("empty dataset")
    if len(preds) != len(gts):
        raise MetricsError(f"{len(preds)} predictions for {len(gts)} ground truths")
    out = []
    for p, g in zip(preds, gts):
        p, g = _binary(p), _binary(g)
        if p.shape != g.shape:
            raise MetricsError(f"shape mismatch {p.shape} vs {g.shape}")
        out.append((p, g))
    return out


def confusion(pred, gt) -> tuple[int, int, int]:
    """(TP, FP, FN) pixel counts."""
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return tp, fp, fn


def iou(preds, gts) -> float:
    """Dataset-accumulated ``sum(TP) / sum(TP + FP + FN)``."""
    tp = union = 0
    for p, g in _pairs(preds, gts):
        a, b, c = confusion(p, g)
        tp += a
        union += a + b + c
    return tp / union if union else 1.0


def niou(preds, gts) -> float:
    """Mean of per-image IoU; an image with empty prediction and mask scores 1."""
    scores = []
    for p, g in _pairs(preds, gts):
        tp, fp, fn = confusion(p, g)
        union = tp + fp + fn
        if union == 0:
            log.debug("nIoU: empty prediction and mask, image counted as 1.0")
            scores.append(1.0)
        else:
            scores.append(tp / union)
    return float(np.mean(scores))


@dataclass(frozen=True)
class Component:
    size: int
    sum_row: int
    sum_col: int

    @property
    def centroid(self) -> tuple[float, float]:
        return self.sum_row / self.size, self.sum_col / self.size


def components(mask, connectivity: int = 8) -> list[Component]:
    """Connected components in raster order of their first pixel."""
    structure = EIGHT_CONNECTED if connectivity == 8 else FOUR_CONNECTED
    labels, n = ndimage.label(_binary(mask), structure=structure)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)
    lab = labels[rows, cols]
    size = np.bincount(lab, minlength=n + 1)
    srow = np.bincount(lab, weights=rows, minlength=n + 1)
    scol = np.bincount(lab, weights=cols, minlength=n + 1)
    return [Component(int(size[k]), int(srow[k]), int(scol[k])) for k in range(1, n + 1)]


def _sq_distance(a: Component, b: Component) -> Fraction:
    # exact rational arithmetic so threshold ties are decided consistently
    den = a.size * b.size
    dr = Fraction(a.sum_row * b.size - b.sum_row * a.size, den)
    dc = Fraction(a.sum_col * b.size - b.sum_col * a.size, den)
    return dr * dr + dc * dc


def match_components(gt_comps, pred_comps, match_dist: float = 3.0) -> dict[int, int]:
    """Greedy nearest-centroid-first one-to-one matching, gt index -> pred index."""
    limit = Fraction(match_dist) ** 2
    candidates = []
    for gi, g in enumerate(gt_comps):
        for pi, p in enumerate(pred_comps):
            d = _sq_distance(g, p)
            if d <= limit:
                candidates.append((d, gi, pi))
    candidates.sort()
    matched: dict[int, int] = {}
    used = set()
    for _, gi, pi in candidates:
        if gi in matched or pi in used:
            continue
        matched[gi] = pi
        used.add(pi)
    return matched


@dataclass
class TargetCounts:
    targets: int = 0
    detected: int = 0
    false_pixels: int = 0
    pixels: int = 0

    def __add__(self, other: "TargetCounts") -> "TargetCounts":
        return TargetCounts(
            self.targets + other.targets,
            self.detected + other.detected,
            self.false_pixels + other.false_pixels,
            self.pixels + other.pixels,
        )


def target_counts(pred, gt, match_dist: float = 3.0, connectivity: int = 8) -> TargetCounts:
    gcs = components(gt, connectivity)
    pcs = components(pred, connectivity)
    matched = match_components(gcs, pcs, match_dist)
    used = set(matched.values())
    false_pixels = sum(c.size for k, c in enumerate(pcs) if k not in used)
    return TargetCounts(len(gcs), len(matched), false_pixels, int(np.asarray(gt).size))


def pd_fa(preds, gts, match_dist: float = 3.0, connectivity: int = 8) -> tuple[float, float]:
    """Target-level probability of detection and per-pixel false-alarm rate."""
    total = TargetCounts()
    for p, g in _pairs(preds, gts):
        total = total + target_counts(p, g, match_dist, connectivity)
    if total.targets == 0:
        raise MetricsError("no ground-truth targets in dataset; Pd is undefined")
    return total.detected / total.targets, total.false_pixels / total.pixels


@dataclass
class MetricsReport:
    iou: float
    niou: float
    pd: float
    fa: float
    n_images: int
    n_targets: int

    def row(self, variant: str = "") -> dict:
        return {"variant": variant, **asdict(self)}


def evaluate(scores, gts, threshold: float = 0.5, match_dist: float = 3.0) -> MetricsReport:
    """Binarize scores at ``score > threshold`` and compute all four metrics."""
    preds = [np.asarray(s) > threshold for s in scores]
    gts = [_binary(g) for g in gts]
    total = TargetCounts()
    for p, g in _pairs(preds, gts):
        total = total + target_counts(p, g, match_dist)
    if total.targets == 0:
        raise MetricsError("no ground-truth targets in dataset; Pd is undefined")
    return MetricsReport(
        iou=iou(preds, gts),
        niou=niou(preds, gts),
        pd=total.detected / total.targets,
        fa=total.false_pixels / total.pixels,
        n_images=len(preds),
        n_targets=total.targets,
    )


METRICS_FIELDS = ["variant", "iou", "niou", "pd", "fa", "n_images", "n_targets"]


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


@dataclass
class RocCurve:
    points: list[tuple[float, float, float]]
    step: float

    @property
    def taus(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])


def threshold_grid(step: float) -> list[float]:
    """``[0, step, 2*step, ..., 1]``; step must divide 1."""
    if not 0 < step <= 1:
        raise MetricsError(f"step must be in (0, 1], got {step}")
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise MetricsError(f"step {step} does not divide [0, 1] evenly")
    return [k * step for k in range(n)] + [1.0]


def roc_sweep(scores, gts, step: float = 1e-4) -> RocCurve:
    """Pixel-level TPR/FPR of ``score > tau`` for every tau on a uniform grid."""
    scores, gts = list(scores), list(gts)
    if not scores or len(scores) != len(gts):
        raise MetricsError("scores and masks must be non-empty and of equal length")
    pos, neg = [], []
    for s, g in zip(scores, gts):
        s = np.asarray(s, dtype=np.float64)
        g = _binary(g)
        s = s.reshape(g.shape)
        pos.append(s[g])
        neg.append(s[~g])
    pos = np.sort(np.concatenate(pos))
    neg = np.sort(np.concatenate(neg))
    if pos.size == 0:
        raise MetricsError("no positive pixels in dataset; TPR is undefined")
    taus = np.array(threshold_grid(step))
    tp = pos.size - np.searchsorted(pos, taus, side="right")
    fp = neg.size - np.searchsorted(neg, taus, side="right")
    tpr = tp / pos.size
    fpr = fp / neg.size if neg.size else np.zeros_like(tpr)
    return RocCurve([(float(t), float(a), float(b)) for t, a, b in zip(taus, tpr, fpr)], step)


def write_roc_csv(path, curve: RocCurve) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# step={curve.step!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["tau", "tpr", "fpr"])
        for t, a, b in curve.points:
            writer.writerow([repr(t), repr(a), repr(b)])


def read_roc_csv(path) -> RocCurve:
    lines = Path(path).read_text().splitlines()
    step = float(lines[0].split("=", 1)[1])
    rows = list(csv.reader(lines[2:]))
    return RocCurve([tuple(float(v) for v in r) for r in rows], step)


ROC_PROJECTIONS = {
    "tpr_fpr": ("fpr", "tpr"),
    "tpr_tau": ("tau", "tpr"),
    "fpr_tau": ("tau", "fpr"),
}


def write_roc_projections(out_dir, curve: RocCurve, plot: bool = True) -> list[Path]:
    """The three 2-D views of the sweep, as CSV (and PNG when ``plot``)."""
    out_dir = Path(out_dir)
    cols = {"tau": curve.taus, "tpr": curve.tpr, "fpr": curve.fpr}
    written = []
    for name, (xk, yk) in ROC_PROJECTIONS.items():
        path = out_dir / f"roc_{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([xk, yk])
            for a, b in zip(cols[xk], cols[yk]):
                writer.writerow([repr(float(a)), repr(float(b))])
        written.append(path)
    if plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        for name, (xk, yk) in ROC_PROJECTIONS.items():
            fig, ax = plt.subplots(figsize=(4, 4))
            ax.plot(cols[xk], cols[yk])
            ax.set_xlabel(xk.upper() if xk != "tau" else "tau")
            ax.set_ylabel(yk.upper())
            ax.set_title(name.replace("_", " vs ").upper())
            ax.grid(True, alpha=0.3)
            fig.tight_layout()
            path = out_dir / f"roc_{name}.png"
            fig.savefig(path, dpi=100, metadata={"Software": None})
            plt.close(fig)
            written.append(path)
    return written
