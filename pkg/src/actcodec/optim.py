"""AdamW with decoupled weight decay, cosine warmup schedule, gradient clipping."""

from __future__ import annotations

import math

import numpy as np


class AdamW:
    """Operates on a named parameter dict in place; moments keyed by name."""

    def __init__(self, params: dict[str, np.ndarray], betas=(0.9, 0.95), eps: float = 1e-8,
                 weight_decay: float = 0.1):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p *= 1.0 - lr * self.weight_decay
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self, prefix: str = "adam.") -> dict[str, np.ndarray]:
        out = {prefix + "m." + k: v for k, v in self.m.items()}
        out.update({prefix + "v." + k: v for k, v in self.v.items()})
        out[prefix + "t"] = np.array([self.t], dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "adam."):
        self.t = int(arrays[prefix + "t"][0])
        for key in self.m:
            self.m[key] = arrays[prefix + "m." + key].copy()
            self.v[key] = arrays[prefix + "v." + key].copy()


def cosine_warmup_lr(step: int, lr_max: float, warmup_steps: int, total_steps: int) -> float:
    """Learning rate for 1-based optimizer step `step`.

    Linear ramp lr_max * step / warmup_steps while step <= warmup, then
    cosine decay to zero at total_steps.
    """
    if step < 1:
        raise ValueError(f"step is 1-based, got {step}")
    if warmup_steps > 0 and step <= warmup_steps:
        return lr_max * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min(step - warmup_steps, span) / span
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return math.sqrt(total)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all grads in place so the global norm is at most max_norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm
