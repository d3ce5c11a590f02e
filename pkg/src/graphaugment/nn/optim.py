"""Adam optimizer."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation, ShapeError
from .params import ParameterSet


def adam_step(params: ParameterSet, grads: dict, state: dict, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, t: int = 1):
    """Apply one bias-corrected Adam update in place.

    ``state`` holds the first/second moments per parameter name and is
    created on demand; ``t`` is the 1-based step count.
    """
    if t < 1:
        raise ContractViolation(f"step count must be >= 1, got {t}")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m, v = state.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state[name] = (m, v)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, params: ParameterSet, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.state: dict = {}

    def step(self, grads: dict | None = None):
        grads = self.params.grads() if grads is None else grads
        if self.clip_norm is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > self.clip_norm:
                grads = {k: g * (self.clip_norm / norm) for k, g in grads.items()}
        self.t += 1
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps, self.t)
