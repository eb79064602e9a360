"""Finite-difference verification of analytic gradients.

Run in float64: central differences at h ~ cbrt(machine eps) leave enough
headroom to resolve a 1e-4 relative error bound.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

DEFAULT_TOLERANCE = 1e-4


def relative_error(a: float, b: float) -> float:
    """|a - b| / max(|a|, |b|, 1e-8)."""
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def numeric_gradient(loss_fn: Callable[[], Tensor], array: np.ndarray,
                     coords: Sequence[tuple] ) -> np.ndarray:
    """Central-difference dloss/darray at the given coordinates.

    loss_fn must rebuild the forward pass from the tensors' current data,
    so in-place perturbations of *array* are observed.
    """
    grads = np.empty(len(coords), dtype=np.float64)
    for n, idx in enumerate(coords):
        orig = array[idx]
        h = 6e-6 * max(1.0, abs(float(orig)))
        array[idx] = orig + h
        up = loss_fn().item()
        array[idx] = orig - h
        down = loss_fn().item()
        array[idx] = orig
        grads[n] = (up - down) / (2.0 * h)
    return grads


def check_gradients(loss_fn: Callable[[], Tensor], tensors: dict[str, Tensor],
                    max_coords_per_tensor: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare analytic gradients against finite differences.

    Evaluates loss_fn once for the analytic pass, then perturbs either every
    coordinate or a random sample of ``max_coords_per_tensor`` per tensor.
    Returns the worst relative error seen.
    """
    for t in tensors.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in tensors.items()}

    worst = 0.0
    for name, t in tensors.items():
        all_coords = list(np.ndindex(*t.shape)) if t.ndim else [()]
        if max_coords_per_tensor is not None and len(all_coords) > max_coords_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            pick = rng.choice(len(all_coords), size=max_coords_per_tensor, replace=False)
            coords = [all_coords[i] for i in pick]
        else:
            coords = all_coords
        numeric = numeric_gradient(loss_fn, t.data, coords)
        for idx, fd in zip(coords, numeric):
            err = relative_error(float(analytic[name][idx]), float(fd))
            worst = max(worst, err)
    return worst
