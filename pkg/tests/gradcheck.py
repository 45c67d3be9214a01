"""Central finite-difference checks against autograd, one verdict per tensor."""
from __future__ import annotations

from typing import Callable

import torch


def tensor_relative_errors(
    loss_fn: Callable[[], torch.Tensor],
    params: dict[str, torch.Tensor],
    h: float = 1e-3,
    n_entries: int = 3,
    seed: int = 0,
) -> dict[str, float]:
    """Relative error between autograd and central differences for each tensor.

    Each tensor is probed along one random unit direction (covering every entry
    at once) and at its ``n_entries`` largest-gradient entries.
    """
    names = list(params)
    grads = torch.autograd.grad(loss_fn(), [params[n] for n in names])
    gen = torch.Generator().manual_seed(seed)
    errors = {}
    with torch.no_grad():
        for name, g in zip(names, grads):
            p = params[name]
            d = torch.randn(p.shape, generator=gen, dtype=p.dtype)
            directions = [d / d.norm()]
            top = torch.topk(g.abs().flatten(), min(n_entries, g.numel())).indices
            for idx in top.tolist():
                e = torch.zeros(p.numel(), dtype=p.dtype)
                e[idx] = 1.0
                directions.append(e.view(p.shape))
            fd, an = [], []
            for direction in directions:
                p.add_(h * direction)
                up = float(loss_fn())
                p.sub_(2 * h * direction)
                down = float(loss_fn())
                p.add_(h * direction)
                fd.append((up - down) / (2 * h))
                an.append(float((g * direction).sum()))
            fd_t, an_t = torch.tensor(fd), torch.tensor(an)
            scale = max(float(fd_t.norm()), float(an_t.norm()), 1e-12)
            errors[name] = float((fd_t - an_t).norm()) / scale
    return errors
