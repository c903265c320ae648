"""Finite-difference gradient checking and parameter utilities."""

from __future__ import annotations

import torch

FD_EPS = 1e-6
REL_TOL = 1e-4


def randomize(module: torch.nn.Module, seed: int = 0, scale: float = 0.5) -> torch.nn.Module:
    """Overwrite every parameter with seeded noise so no path is trivially zero."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * scale)
    return module


def zero_parameters(module: torch.nn.Module) -> torch.nn.Module:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """``max|a - n| / max(max|a|, max|n|)``, 0 when both vanish."""
    scale = max(analytic.abs().max().item(), numeric.abs().max().item())
    if scale == 0.0:
        return 0.0
    return (analytic - numeric).abs().max().item() / scale


def _projection(out: torch.Tensor, seed: int) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed + 1)
    return torch.randn(out.shape, generator=g, dtype=out.dtype)


def fd_gradient_error(fn, tensors, seed: int = 0, eps: float = FD_EPS, max_coords: int | None = None) -> float:
    """Worst relative error between autograd and central differences.

    The scalar objective is ``sum(fn() * W)`` for a fixed random ``W``, which
    avoids the degenerate zero gradients of a plain sum through normalization.
    ``tensors`` are perturbed in place; ``max_coords`` samples coordinates of
    large tensors.
    """
    with torch.no_grad():
        weight = _projection(fn(), seed)

    def objective():
        return (fn() * weight).sum()

    for t in tensors:
        t.requires_grad_(True)
        t.grad = None
    loss = objective()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    worst = 0.0
    gen = torch.Generator().manual_seed(seed + 2)
    for t, g in zip(tensors, grads):
        g = torch.zeros_like(t) if g is None else g
        flat = t.data.view(-1)
        idx = torch.arange(flat.numel())
        if max_coords is not None and flat.numel() > max_coords:
            idx = torch.randperm(flat.numel(), generator=gen)[:max_coords]
        numeric = torch.empty(len(idx), dtype=t.dtype)
        with torch.no_grad():
            for k, i in enumerate(idx.tolist()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = objective().item()
                flat[i] = orig - eps
                down = objective().item()
                flat[i] = orig
                numeric[k] = (up - down) / (2 * eps)
        worst = max(worst, relative_error(g.reshape(-1)[idx], numeric))
    return worst


def module_gradient_error(module, inputs, seed=0, max_coords=None, forward=None) -> float:
    """Gradient error w.r.t. the inputs and every parameter of ``module``."""
    forward = forward or (lambda: module(*inputs))
    params = list(module.parameters())
    return fd_gradient_error(forward, list(inputs) + params, seed=seed, max_coords=max_coords)


def metric_cases(n: int = 1000, seed: int = 0):
    """Random (score, pred, gt) triples up to 16x16 with varied densities.

    Scores are multiples of 1/20 so they tie with thresholds on a 0.05 grid.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    for _ in range(n):
        h, w = (int(v) for v in rng.integers(1, 17, size=2))
        dg, dp = rng.uniform(0.0, 0.5, size=2)
        gt = rng.random((h, w)) < dg
        score = rng.integers(0, 21, size=(h, w)) / 20.0
        pred = rng.random((h, w)) < dp
        yield score, pred, gt
