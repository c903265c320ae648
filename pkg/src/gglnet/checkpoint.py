"""Checkpoint archive: an ``.npz`` mapping hierarchical parameter names to arrays.

The variant used to build the network is stored alongside under ``__variant__``
as a JSON string so evaluation can rebuild the same architecture.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .lcl import LclConfig
from .model import GGLNet, VariantConfig

META_KEY = "__variant__"


class CheckpointMismatchError(RuntimeError):
    pass


def variant_to_dict(v: VariantConfig) -> dict:
    d = asdict(v)
    for k in ("main_input", "supp_input", "gsm_mode", "fusion_mode"):
        d[k] = getattr(v, k).value
    d["channels"] = list(v.channels)
    return d


def variant_from_dict(d: dict) -> VariantConfig:
    d = dict(d)
    d["lcl"] = LclConfig(**d.get("lcl", {}))
    d["channels"] = tuple(d.get("channels", ()))
    return VariantConfig(**d)


def save_checkpoint(model: GGLNet, path) -> Path:
    path = Path(path)
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays[META_KEY] = np.array(json.dumps(variant_to_dict(model.variant), sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], VariantConfig | None]:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = arrays.pop(META_KEY, None)
    variant = variant_from_dict(json.loads(str(meta))) if meta is not None else None
    return arrays, variant


def load_into(model: GGLNet, arrays: dict[str, np.ndarray]) -> GGLNet:
    """Copy arrays into ``model``, naming the first parameter that does not fit."""
    expected = model.state_dict()
    for name, tensor in expected.items():
        if name not in arrays:
            raise CheckpointMismatchError(f"checkpoint is missing parameter {name!r}")
        if tuple(arrays[name].shape) != tuple(tensor.shape):
            raise CheckpointMismatchError(
                f"parameter {name!r}: checkpoint shape {tuple(arrays[name].shape)} "
                f"!= model shape {tuple(tensor.shape)}"
            )
    extra = sorted(set(arrays) - set(expected))
    if extra:
        raise CheckpointMismatchError(f"checkpoint has unexpected parameter {extra[0]!r}")
    model.load_state_dict({k: torch.as_tensor(arrays[k]) for k in expected})
    return model


def load_checkpoint(path, variant: VariantConfig | None = None) -> GGLNet:
    arrays, stored = read_checkpoint(path)
    variant = variant or stored
    if variant is None:
        raise CheckpointMismatchError(f"{path}: no stored variant and none supplied")
    model = GGLNet(variant)
    return load_into(model, arrays).eval()
