"""Adam with a step-decay learning-rate schedule."""
from __future__ import annotations

import math

import numpy as np


def step_decay_lr(epoch: int, epochs: int, base_lr: float = 1e-4, decays: int = 15, factor: float = 0.65) -> float:
    """Learning rate for a 0-based epoch when ``decays`` drops happen at equal intervals.

    The run is split into ``decays + 1`` equal intervals; interval k uses
    ``base_lr * factor**k``.
    """
    if epochs <= 0:
        raise ValueError("epochs must be positive")
    k = min(int(math.floor(epoch * (decays + 1) / epochs)), decays)
    return base_lr * factor**k


class Adam:
    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        step = self.lr * math.sqrt(corr2) / corr1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= step * m / (np.sqrt(v) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}
