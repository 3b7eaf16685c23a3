"""Adam with per-group learning rates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError, Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a name -> Tensor mapping.

    ``lr_overrides`` maps parameter names to their own learning rate, which is
    how the encoder / rest split is expressed.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 lr_overrides: dict[str, float] | None = None):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self.lr_overrides = dict(lr_overrides or {})
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def step(self, scale: float = 1.0) -> None:
        """Apply one update using ``scale * p.grad`` (missing grads count as zero)."""
        adam_step(self.state, self.params, scale=scale, lr_overrides=self.lr_overrides)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def adam_step(state: AdamState, params: dict[str, Tensor], scale: float = 1.0,
              lr_overrides: dict[str, float] | None = None) -> None:
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = np.zeros_like(p.data) if p.grad is None else p.grad * scale
        if g.shape != p.data.shape:
            raise DimensionError(f"adam: grad shape {g.shape} != parameter {name} shape {p.data.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.data.shape:
            raise DimensionError(f"adam: moment shape {m.shape} != parameter {name} shape {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = state.lr if lr_overrides is None else lr_overrides.get(name, state.lr)
        p.data -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
