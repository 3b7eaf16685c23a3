"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward, reset_tape


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-6, indices=None) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. the array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return g


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps near-zero entries, where central differences carry
    ~1e-10 of round-off, from dominating the ratio.
    """
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = diff / scale
    return float(rel.max()) if rel.size else 0.0


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], eps: float = 1e-6,
                    sample: float | None = None, rng: np.random.Generator | None = None) -> dict[str, float]:
    """Max relative error per parameter between backward and finite differences.

    ``sample`` checks only that fraction of each parameter's entries (at least one).
    """
    for p in params.values():
        p.grad = None
    reset_tape()
    backward(loss_fn())
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}

    def value() -> float:
        reset_tape()
        return loss_fn().item()

    rng = rng or np.random.default_rng(0)
    out = {}
    for k, p in params.items():
        idx = None
        if sample is not None:
            count = max(1, int(round(sample * p.data.size)))
            idx = rng.choice(p.data.size, size=count, replace=False)
        num = numeric_grad(value, p.data, eps, idx)
        a = analytic[k]
        if idx is not None:
            a = a.reshape(-1)[idx]
            num = num.reshape(-1)[idx]
        out[k] = max_relative_error(a, num)
    reset_tape()
    return out
