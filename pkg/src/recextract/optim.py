"""AdamW with linear warmup."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr_at(self, step: int) -> float:
        """Learning rate for 1-indexed ``step``: ramps as lr*step/warmup, then flat."""
        if self.warmup_steps <= 0:
            return self.lr
        return self.lr * min(1.0, step / self.warmup_steps)


def adam_step(params, grads, state: OptimizerState):
    """Apply one in-place AdamW update.

    ``params`` maps names to tensors; ``grads`` maps names to arrays. A
    parameter without a gradient is treated as having a zero gradient, so
    weight decay still applies to it.
    """
    state.step += 1
    t = state.step
    lr = state.lr_at(t)
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)


class Adam:
    """Thin stateful wrapper binding a parameter dict to an ``OptimizerState``."""

    def __init__(self, params, lr=1e-3, weight_decay=0.01, warmup_steps=100):
        self.params = params
        self.state = OptimizerState(lr=lr, weight_decay=weight_decay, warmup_steps=warmup_steps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state)
