"""Flat ``key = value`` run configuration files.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Example::

    variant = original+gradient
    epochs = 50
    synth_n_images = 200
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import SplitRatio, SynthConfig
from .lcl import LclConfig
from .model import VariantConfig, variant_for


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    lowered = v.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace("x", ",").split(",") if x.strip())


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.split(",") if x.strip())


def _names(v: str) -> list[str]:
    return [x.strip() for x in v.split(",") if x.strip()]


@dataclass
class RunConfig:
    variant: VariantConfig = field(default_factory=VariantConfig)
    data: Path | None = None
    synth: SynthConfig | None = None
    synth_test_fraction: float = 0.2
    split_ratio: SplitRatio = SplitRatio.R7_3
    target_size: tuple[int, int] | None = None
    epochs: int = 500
    batch_size: int = 4
    lr: float = 1e-4
    seed: int = 0
    out: Path = Path("runs")
    threshold: float = 0.5
    match_dist: float = 3.0
    step: float = 1e-4
    variants: list[str] = field(default_factory=list)


VARIANT_KEYS = {
    "main_input": str,
    "supp_input": str,
    "gsm_mode": str,
    "fusion_mode": str,
    "channels": _ints,
    "se_ratio": int,
    "r": int,
}
SYNTH_KEYS = {
    "synth_n_images": ("n_images", int),
    "synth_size": ("size", _ints),
    "synth_targets": ("targets_per_image", _ints),
    "synth_sigma": ("target_sigma", _floats),
    "synth_amplitude": ("amplitude", _floats),
    "synth_smoothness": ("clutter_smoothness", float),
    "synth_seed": ("seed", int),
}
RUN_KEYS = {
    "data": Path,
    "synth_test_fraction": float,
    "split_ratio": SplitRatio,
    "target_size": _ints,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "seed": int,
    "out": Path,
    "threshold": float,
    "match_dist": float,
    "step": float,
    "variants": _names,
}
ALL_KEYS = {"variant", "lcl_enabled", "lcl_kernel", *VARIANT_KEYS, *SYNTH_KEYS, *RUN_KEYS}


def parse_pairs(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        pairs[key] = value
    return pairs


def build_config(pairs: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    try:
        variant = cfg.variant
        if "variant" in pairs:
            variant = variant_for(pairs["variant"], variant)
        overrides = {k: conv(pairs[k]) for k, conv in VARIANT_KEYS.items() if k in pairs}
        lcl = variant.lcl
        if "lcl_enabled" in pairs or "lcl_kernel" in pairs:
            lcl = LclConfig(
                enabled=_bool(pairs.get("lcl_enabled", str(lcl.enabled))),
                kernel=int(pairs.get("lcl_kernel", lcl.kernel)),
            )
        variant = replace(variant, lcl=lcl, **overrides)

        synth = cfg.synth
        synth_over = {name: conv(pairs[k]) for k, (name, conv) in SYNTH_KEYS.items() if k in pairs}
        if synth_over:
            synth = replace(synth or SynthConfig(), **synth_over)

        run_over = {k: conv(pairs[k]) for k, conv in RUN_KEYS.items() if k in pairs}
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg = replace(cfg, variant=variant, synth=synth, **run_over)
    if cfg.target_size is not None and len(cfg.target_size) != 2:
        raise ConfigError("target_size needs two values, e.g. 256x256")
    if cfg.epochs < 1 or cfg.batch_size < 1:
        raise ConfigError("epochs and batch_size must be positive")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return build_config(parse_pairs(path.read_text()))
