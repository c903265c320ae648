"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import data as data_mod
from .checkpoint import CheckpointMismatchError, load_checkpoint
from .config import ConfigError, RunConfig, build_config, load_config
from .data import DatasetError, DatasetSpec, SynthConfig
from .metrics import MetricsError, evaluate, roc_sweep, write_metrics_csv, write_roc_csv, write_roc_projections
from .model import SCHEMES, NonFiniteLossError, build_model, variant_for
from .preprocess import gradient_magnitude
from .train import fit, predict, stack_samples

log = logging.getLogger("gglnet")

EXIT_USAGE = 1
EXIT_RUNTIME = 2
RUNTIME_ERRORS = (NonFiniteLossError, CheckpointMismatchError, DatasetError, MetricsError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    over = {}
    for key in ("data", "out", "seed", "epochs", "threshold", "step"):
        value = getattr(args, key, None)
        if value is not None:
            over[key] = str(value)
    return build_config(over, cfg)


def _ids_in(root: Path) -> list[str]:
    images = root / "images"
    if not images.is_dir():
        raise DatasetError(f"no images/ directory under {root}")
    return sorted(p.stem for p in images.iterdir() if p.is_file())


def _native_size(root: Path, sample_id: str) -> tuple[int, int]:
    path = data_mod._find(root / "images", sample_id)
    with Image.open(path) as im:
        w, h = im.size
    return h, w


def _spec(cfg: RunConfig, ids) -> DatasetSpec:
    size = cfg.target_size or _native_size(cfg.data, ids[0])
    if size[0] % 16 or size[1] % 16:
        raise ConfigError(f"image size {size} is not divisible by 16; set target_size")
    return DatasetSpec(cfg.data, list(ids), tuple(size))


def resolve_data(cfg: RunConfig) -> tuple[list, list]:
    """(train, test) samples from a dataset directory or the synthetic generator."""
    if cfg.data is not None:
        root = Path(cfg.data)
        if (root / "train.txt").is_file() and (root / "test.txt").is_file():
            train_ids = data_mod.read_split(root / "train.txt")
            test_ids = data_mod.read_split(root / "test.txt")
        else:
            train_ids, test_ids = data_mod.split_dataset(_ids_in(root), cfg.split_ratio, cfg.seed)
        return (
            data_mod.load_dataset(_spec(cfg, train_ids)),
            data_mod.load_dataset(_spec(cfg, test_ids)),
        )
    if cfg.synth is not None:
        samples = data_mod.synth_generate(cfg.synth)
        n_test = int(round(cfg.synth_test_fraction * len(samples)))
        return samples[: len(samples) - n_test], samples[len(samples) - n_test :]
    raise ConfigError("no dataset: pass --data or set synth_* keys in the config")


def resolve_eval_data(cfg: RunConfig) -> list:
    if cfg.data is not None:
        root = Path(cfg.data)
        ids = data_mod.read_split(root / "test.txt") if (root / "test.txt").is_file() else _ids_in(root)
        return data_mod.load_dataset(_spec(cfg, ids))
    return resolve_data(cfg)[1]


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    synth = cfg.synth or SynthConfig()
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)
    out = _out(cfg)
    samples = data_mod.synth_generate(synth)
    n_test = int(round(cfg.synth_test_fraction * len(samples)))
    n_train = len(samples) - n_test
    data_mod.write_dataset(samples, out, range(n_train), range(n_train, len(samples)))
    print(f"wrote {len(samples)} images ({n_train} train / {n_test} test) to {out}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _run_config(args)
    if cfg.data is None:
        raise ConfigError("preprocess needs --data")
    out = _out(cfg)
    root = Path(cfg.data)
    for sid in _ids_in(root):
        with Image.open(data_mod._find(root / "images", sid)) as im:
            img = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        grad = gradient_magnitude(img)
        Image.fromarray(np.round(grad * 255).astype(np.uint8)).save(out / f"{sid}_grad.png")
    print(f"gradient magnitude images written to {out}")
    return 0


def train_variant(cfg: RunConfig, variant, train, test, log_path=None, ckpt_path=None):
    model = build_model(variant, seed=cfg.seed)
    history = fit(
        model,
        train,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        seed=cfg.seed,
        eval_samples=test,
        threshold=cfg.threshold,
        match_dist=cfg.match_dist,
        log_path=log_path,
        checkpoint_path=ckpt_path,
    )
    return model, history


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = _out(cfg)
    train, test = resolve_data(cfg)
    _, history = train_variant(cfg, cfg.variant, train, test, out / "train_log.csv", out / "checkpoint.npz")
    last = history[-1]
    print(f"trained {len(history)} epoch(s); final loss {last['loss']:.4f}; checkpoint {out / 'checkpoint.npz'}")
    return 0


def _print_report(report, label=""):
    print(f"{'variant':<28}{'IoU':>8}{'nIoU':>8}{'Pd':>8}{'Fa':>12}")
    print(f"{label:<28}{report.iou:>8.4f}{report.niou:>8.4f}{report.pd:>8.4f}{report.fa:>12.3e}")


def run_eval(cfg: RunConfig, checkpoint=None, predictor=None, variant=None):
    """Score the eval split; ``predictor`` (images -> score maps) replaces the model when given.

    ``variant`` fixes the architecture the checkpoint must fit; by default the
    variant stored in the checkpoint is used.
    """
    samples = resolve_eval_data(cfg)
    images, _ = stack_samples(samples)
    if predictor is None:
        if checkpoint is None:
            raise ConfigError("eval needs --checkpoint")
        model = load_checkpoint(checkpoint, variant)
        predictor = lambda x: predict(model, x)  # noqa: E731
    scores = np.asarray(predictor(images))
    masks = [s[1] for s in samples]
    return scores, masks


def _architecture(args, cfg: RunConfig):
    # an explicit config pins the architecture; otherwise trust the checkpoint
    return cfg.variant if args.config else None


def cmd_eval(args, predictor=None) -> int:
    cfg = _run_config(args)
    out = _out(cfg)
    scores, masks = run_eval(cfg, args.checkpoint, predictor, _architecture(args, cfg))
    report = evaluate(scores, masks, cfg.threshold, cfg.match_dist)
    label = Path(args.checkpoint).stem if args.checkpoint else "hook"
    write_metrics_csv(out / "metrics.csv", [report.row(label)])
    _print_report(report, label)
    return 0


def cmd_roc(args, predictor=None) -> int:
    cfg = _run_config(args)
    out = _out(cfg)
    scores, masks = run_eval(cfg, args.checkpoint, predictor, _architecture(args, cfg))
    curve = roc_sweep(list(scores), masks, cfg.step)
    write_roc_csv(out / "roc.csv", curve)
    write_roc_projections(out, curve, plot=not args.no_plot)
    print(f"{len(curve.points)} thresholds written to {out / 'roc.csv'}")
    return 0


ABLATION_FIELDS = ["scheme", "IoU", "nIoU", "table", "variant", "params"]


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    names = list(args.variants or cfg.variants or SCHEMES)
    unknown = [n for n in names if n.strip().lower() not in SCHEMES]
    if unknown:
        raise UsageError(f"unknown variant(s) {', '.join(unknown)}; valid names: {', '.join(SCHEMES)}")
    out = _out(cfg)
    train, test = resolve_data(cfg)
    base = replace(cfg.variant)
    cache = {}
    rows = []
    for name in names:
        key = name.strip().lower()
        table, scheme, _ = SCHEMES[key]
        variant = variant_for(key, base)
        if variant not in cache:
            model, _ = train_variant(cfg, variant, train, test)
            report = evaluate(predict(model, stack_samples(test)[0]), [s[1] for s in test], cfg.threshold, cfg.match_dist)
            cache[variant] = (report, model.num_parameters())
        report, params = cache[variant]
        rows.append(
            {"scheme": scheme, "IoU": repr(report.iou), "nIoU": repr(report.niou),
             "table": table, "variant": key, "params": params}
        )
        print(f"[{table:>3}] {scheme:<28} IoU {report.iou:.4f}  nIoU {report.niou:.4f}  params {params}")
    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATION_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gglnet", description="Gradient-guided infrared small-target segmentation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--config", type=Path)
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("--data", type=Path)
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic dataset"), data=False)
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("preprocess", help="write gradient magnitude images"))
    p.set_defaults(func=cmd_preprocess)

    p = common(sub.add_parser("train", help="train one variant"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("ablate", help="train and score the ablation variants"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--variants", type=lambda s: [x for x in s.split(",") if x])
    p.set_defaults(func=cmd_ablate)

    p = common(sub.add_parser("roc", help="threshold sweep of a checkpoint"))
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--step", type=float)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_roc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    torch.use_deterministic_algorithms(True)
    try:
        return args.func(args)
    except (ConfigError, UsageError, KeyError) as exc:
        print(f"gglnet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"gglnet: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
