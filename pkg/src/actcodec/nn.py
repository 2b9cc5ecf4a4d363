"""Minimal numpy layers with explicit reverse-mode backward passes.

Every layer caches what its backward pass needs during forward and returns
input gradients from backward, accumulating parameter gradients in place.
Parameters are plain numpy arrays reachable through named_parameters(), so
finite-difference checks can perturb them directly. One forward/backward
pair may be in flight per module instance; training is serial by design.

Constants are kept as python floats so float32 and float64 parameter sets
both run without silent promotion.
"""

from __future__ import annotations

import math

import numpy as np


class Module:
    """Base class holding named parameters, their gradients, and submodules."""

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}
        self._modules: dict[str, Module] = {}

    def add_param(self, name: str, value: np.ndarray) -> np.ndarray:
        self._params[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = ""):
        for name, param in self._params.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def named_grads(self, prefix: str = ""):
        for name, grad in self._grads.items():
            yield prefix + name, grad
        for name, module in self._modules.items():
            yield from module.named_grads(prefix + name + ".")

    def zero_grads(self):
        for name in self._grads:
            self._grads[name] = np.zeros_like(self._params[name])
        for module in self._modules.values():
            module.zero_grads()

    def param(self, name: str) -> np.ndarray:
        return self._params[name]

    def accumulate(self, name: str, grad: np.ndarray):
        self._grads[name] = self._grads[name] + grad.astype(self._params[name].dtype, copy=False)

    def n_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def get_state(self) -> dict[str, np.ndarray]:
        return {name: param.copy() for name, param in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = set(own) ^ set(state)
            raise ValueError(f"parameter set mismatch: {sorted(missing)}")
        for name, param in own.items():
            if param.shape != state[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            param[...] = state[name]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        scale = 1.0 / math.sqrt(d_in)
        self.w = self.add_param("w", (rng.standard_normal((d_in, d_out)) * scale).astype(dtype))
        self.b = self.add_param("b", np.zeros(d_out, dtype=dtype))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._x
        flat_x = x.reshape(-1, x.shape[-1])
        flat_d = dout.reshape(-1, dout.shape[-1])
        self.accumulate("w", flat_x.T @ flat_d)
        self.accumulate("b", flat_d.sum(axis=0))
        return dout @ self.w.T


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.g = self.add_param("g", np.ones(dim, dtype=dtype))
        self.b = self.add_param("b", np.zeros(dim, dtype=dtype))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        norm = (x - mean) * inv_std
        self._cache = (norm, inv_std)
        return self.g * norm + self.b

    def backward(self, dout: np.ndarray) -> np.ndarray:
        norm, inv_std = self._cache
        dnorm = dout * self.g
        flat = dout.reshape(-1, dout.shape[-1])
        self.accumulate("g", (dout * norm).reshape(-1, dout.shape[-1]).sum(axis=0))
        self.accumulate("b", flat.sum(axis=0))
        mean_dnorm = dnorm.mean(axis=-1, keepdims=True)
        mean_dnorm_norm = (dnorm * norm).mean(axis=-1, keepdims=True)
        return inv_std * (dnorm - mean_dnorm - norm * mean_dnorm_norm)


class DepthwiseConv1d(Module):
    """Per-channel convolution along the token axis with zero 'same' padding."""

    def __init__(self, channels: int, kernel: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if kernel < 1:
            raise ValueError(f"kernel must be >= 1, got {kernel}")
        self.kernel = kernel
        self.pad_left = (kernel - 1) // 2
        scale = 1.0 / math.sqrt(kernel)
        self.w = self.add_param("w", (rng.standard_normal((kernel, channels)) * scale).astype(dtype))
        self.b = self.add_param("b", np.zeros(channels, dtype=dtype))
        self._xpad = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, t, c = x.shape
        pad_right = self.kernel - 1 - self.pad_left
        xpad = np.pad(x, ((0, 0), (self.pad_left, pad_right), (0, 0)))
        self._xpad = xpad
        out = np.zeros_like(x)
        for k in range(self.kernel):
            out = out + self.w[k] * xpad[:, k : k + t]
        return out + self.b

    def backward(self, dout: np.ndarray) -> np.ndarray:
        b, t, c = dout.shape
        xpad = self._xpad
        dxpad = np.zeros_like(xpad)
        dw = np.zeros_like(self.w)
        for k in range(self.kernel):
            dw[k] = (dout * xpad[:, k : k + t]).sum(axis=(0, 1))
            dxpad[:, k : k + t] += dout * self.w[k]
        self.accumulate("w", dw)
        self.accumulate("b", dout.sum(axis=(0, 1)))
        return dxpad[:, self.pad_left : self.pad_left + t]


_NEG_INF = -1e30


class MultiHeadSelfAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = self.add_module("qkv", Linear(d_model, 3 * d_model, rng, dtype))
        self.proj = self.add_module("proj", Linear(d_model, d_model, rng, dtype))
        self._cache = None

    def _split(self, x: np.ndarray) -> np.ndarray:
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        b, h, t, d = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, h * d)

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        b, t, d = x.shape
        qkv = self.qkv.forward(x)
        q, k, v = (self._split(a) for a in np.split(qkv, 3, axis=-1))
        logits = q @ k.transpose(0, 1, 3, 2) * (1.0 / math.sqrt(self.d_head))
        if mask is not None:
            logits = np.where(mask[None, None], logits, np.asarray(_NEG_INF, dtype=logits.dtype))
        logits = logits - logits.max(axis=-1, keepdims=True)
        exp = np.exp(logits)
        scores = exp / exp.sum(axis=-1, keepdims=True)
        out = scores @ v
        self._cache = (q, k, v, scores)
        return self.proj.forward(self._merge(out))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        q, k, v, scores = self._cache
        dmerged = self.proj.backward(dout)
        dattn = self._split(dmerged)
        dscores = dattn @ v.transpose(0, 1, 3, 2)
        dv = scores.transpose(0, 1, 3, 2) @ dattn
        dlogits = scores * (dscores - (dscores * scores).sum(axis=-1, keepdims=True))
        dlogits = dlogits * (1.0 / math.sqrt(self.d_head))
        dq = dlogits @ k
        dk = dlogits.transpose(0, 1, 3, 2) @ q
        dqkv = np.concatenate([self._merge(dq), self._merge(dk), self._merge(dv)], axis=-1)
        return self.qkv.backward(dqkv)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Activation(Module):
    """relu, tanh, or tanh-form gelu; forward intermediates are cached."""

    def __init__(self, name: str):
        super().__init__()
        if name not in ("relu", "gelu", "tanh"):
            raise ValueError(f"unknown activation {name!r}")
        self.name = name
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            self._cache = x
            return np.maximum(x, 0.0)
        if self.name == "tanh":
            t = np.tanh(x)
            self._cache = t
            return t
        t = np.tanh(_GELU_C * (x + _GELU_A * (x * x * x)))
        self._cache = (x, t)
        return 0.5 * x * (1.0 + t)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            return dout * (self._cache > 0)
        if self.name == "tanh":
            t = self._cache
            return dout * (1.0 - t * t)
        x, t = self._cache
        grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * (x * x))
        return dout * grad


class Mlp(Module):
    def __init__(self, d_model: int, rng: np.random.Generator, hidden_mult: int = 4,
                 activation: str = "gelu", dtype=np.float32):
        super().__init__()
        self.fc1 = self.add_module("fc1", Linear(d_model, hidden_mult * d_model, rng, dtype))
        self.act = self.add_module("act", Activation(activation))
        self.fc2 = self.add_module("fc2", Linear(hidden_mult * d_model, d_model, rng, dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.fc2.forward(self.act.forward(self.fc1.forward(x)))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.fc1.backward(self.act.backward(self.fc2.backward(dout)))


class Block(Module):
    """Pre-norm residual block: depthwise conv, self-attention, then MLP.

    conv_kernel=0 drops the conv branch; the token-mixing conv is non-causal
    ('same' padding), so masked sequence models must not include it.
    """

    def __init__(self, d_model: int, n_heads: int, conv_kernel: int, rng: np.random.Generator,
                 activation: str = "gelu", dtype=np.float32):
        super().__init__()
        self.conv = None
        if conv_kernel > 0:
            self.ln1 = self.add_module("ln1", LayerNorm(d_model, dtype))
            self.conv = self.add_module("conv", DepthwiseConv1d(d_model, conv_kernel, rng, dtype))
        self.ln2 = self.add_module("ln2", LayerNorm(d_model, dtype))
        self.attn = self.add_module("attn", MultiHeadSelfAttention(d_model, n_heads, rng, dtype))
        self.ln3 = self.add_module("ln3", LayerNorm(d_model, dtype))
        self.mlp = self.add_module("mlp", Mlp(d_model, rng, activation=activation, dtype=dtype))

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        if self.conv is not None:
            x = x + self.conv.forward(self.ln1.forward(x))
        x = x + self.attn.forward(self.ln2.forward(x), mask)
        return x + self.mlp.forward(self.ln3.forward(x))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dx = dout + self.ln3.backward(self.mlp.backward(dout))
        dx = dx + self.ln2.backward(self.attn.backward(dx))
        if self.conv is not None:
            dx = dx + self.ln1.backward(self.conv.backward(dx))
        return dx


class Embedding(Module):
    def __init__(self, vocab: int, d_model: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.w = self.add_param("w", (rng.standard_normal((vocab, d_model)) * 0.02).astype(dtype))
        self._ids = None

    def forward(self, ids: np.ndarray) -> np.ndarray:
        self._ids = ids
        return self.w[ids]

    def backward(self, dout: np.ndarray) -> None:
        dw = np.zeros_like(self.w)
        np.add.at(dw, self._ids, dout.astype(dw.dtype, copy=False))
        self.accumulate("w", dw)


class PositionEmbedding(Module):
    """Learned additive embedding for a fixed number of token slots."""

    def __init__(self, n_positions: int, d_model: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.w = self.add_param("w", (rng.standard_normal((n_positions, d_model)) * 0.02).astype(dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x + self.w

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.accumulate("w", dout.sum(axis=0))
        return dout


class GridPool(Module):
    """Adaptive mean-pool from an (m, n) token grid to a (rows, cols) cell grid.

    Implemented as a constant assignment matrix so forward and backward are
    plain matrix products. Requires rows <= m and cols <= n.
    """

    def __init__(self, m: int, n: int, rows: int, cols: int, dtype=np.float32):
        super().__init__()
        if rows > m or cols > n:
            raise ValueError(f"cannot pool ({m},{n}) grid down to ({rows},{cols})")
        self.pool = np.zeros((rows * cols, m * n), dtype=dtype)
        for r in range(rows):
            r0, r1 = (r * m) // rows, ((r + 1) * m) // rows
            for c in range(cols):
                c0, c1 = (c * n) // cols, ((c + 1) * n) // cols
                cell = r * cols + c
                for i in range(r0, r1):
                    for j in range(c0, c1):
                        self.pool[cell, i * n + j] = 1.0 / ((r1 - r0) * (c1 - c0))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("ct,btd->bcd", self.pool, x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.einsum("ct,bcd->btd", self.pool, dout)


class GridUpsample(Module):
    """Nearest-cell broadcast from a (rows, cols) cell grid to an (m, n) token grid."""

    def __init__(self, rows: int, cols: int, m: int, n: int, dtype=np.float32):
        super().__init__()
        if rows > m or cols > n:
            raise ValueError(f"cannot upsample ({rows},{cols}) grid to smaller ({m},{n})")
        self.assign = np.zeros((m * n, rows * cols), dtype=dtype)
        for i in range(m):
            for j in range(n):
                r = (i * rows) // m
                c = (j * cols) // n
                self.assign[i * n + j, r * cols + c] = 1.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("tc,bcd->btd", self.assign, x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.einsum("tc,btd->bcd", self.assign, dout)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray,
                  weight: np.ndarray | None = None) -> tuple[float, np.ndarray, float]:
    """Mean cross-entropy over weighted rows.

    logits: (N, C); targets: (N,) int; weight: (N,) with 0 excluding a row.
    Returns (mean loss, dlogits for that mean, total weight).
    """
    n = logits.shape[0]
    if weight is None:
        weight = np.ones(n, dtype=logits.dtype)
    total = float(weight.sum())
    if total <= 0:
        raise ValueError("cross_entropy needs at least one weighted row")
    probs = softmax(logits)
    picked = probs[np.arange(n), targets]
    loss = float((-np.log(np.maximum(picked, 1e-30)) * weight).sum() / total)
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1.0
    dlogits *= (weight / total)[:, None]
    return loss, dlogits, total
