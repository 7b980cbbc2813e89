"""Adam/AdamW and the warmup + cosine learning-rate schedule."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..nn.tensor import Parameter

__all__ = ["Adam", "cosine_warmup_lr"]


class Adam:
    """Adam with optional decoupled weight decay (AdamW when > 0).

    Decay is applied only to tensors of rank >= 2 that are not position or
    class embeddings, following the usual transformer practice.
    """

    def __init__(
        self,
        params: Sequence[Parameter],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self._decayed = [
            weight_decay > 0 and p.data.ndim >= 2 and ".pos" not in p.name and ".cls" not in p.name
            for p in self.params
        ]

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, m, v, decayed in zip(self.params, self.m, self.v, self._decayed):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if decayed:
                update = update + self.weight_decay * p.data
            p.data -= lr * update.astype(p.data.dtype, copy=False)


def cosine_warmup_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup from 0, then cosine decay to 0 over the remainder."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if warmup_steps >= total_steps:
        raise ValueError("warmup must be shorter than the run")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min(max(step - warmup_steps, 0) / span, 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
