"""Orthonormal DCT-II along the time axis, as a direct matrix product.

The frequency-domain reconstruction loss compares transforms of the raw
H x D chunk, one independent transform per action dimension. Desk horizons
are small (H <= 64), so an explicit basis matrix is simpler and exactly
linear, which keeps the loss gradient a plain transposed product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def dct_basis(length: int, dtype=np.float64) -> np.ndarray:
    """Orthonormal DCT-II basis: row k is sqrt(s_k/N) * cos(pi*k*(2n+1)/(2N))."""
    if length < 1:
        raise ValueError(f"transform length must be >= 1, got {length}")
    n = np.arange(length)
    k = n[:, None]
    basis = np.cos(np.pi * k * (2 * n[None, :] + 1) / (2.0 * length))
    scale = np.full(length, np.sqrt(2.0 / length))
    scale[0] = np.sqrt(1.0 / length)
    return (scale[:, None] * basis).astype(dtype)


@dataclass(frozen=True)
class DctPlan:
    """Precomputed orthonormal basis for a fixed transform length."""

    length: int
    basis: np.ndarray = field(default=None, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.basis is None:
            object.__setattr__(self, "basis", dct_basis(self.length))
        if self.basis.shape != (self.length, self.length):
            raise ValueError("basis shape does not match plan length")


def dct_forward(signal: np.ndarray, plan: DctPlan) -> np.ndarray:
    """Apply the DCT down axis 0 of an H x D (or H,) signal."""
    signal = np.asarray(signal)
    if signal.shape[0] != plan.length:
        raise ValueError(f"signal length {signal.shape[0]} != plan length {plan.length}")
    return plan.basis @ signal


def dct_inverse(coeffs: np.ndarray, plan: DctPlan) -> np.ndarray:
    """Inverse transform; the basis is orthonormal so this is basis.T @ coeffs."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != plan.length:
        raise ValueError(f"coeffs length {coeffs.shape[0]} != plan length {plan.length}")
    return plan.basis.T @ coeffs


def dct_forward_batch(values: np.ndarray, plan: DctPlan) -> np.ndarray:
    """DCT along axis 1 of (B, H, D) values."""
    if values.shape[1] != plan.length:
        raise ValueError(f"axis-1 length {values.shape[1]} != plan length {plan.length}")
    return np.einsum("kh,bhd->bkd", plan.basis.astype(values.dtype), values)


def dct_forward_batch_grad(grad_coeffs: np.ndarray, plan: DctPlan) -> np.ndarray:
    """Backprop through dct_forward_batch (the transform is linear)."""
    return np.einsum("kh,bkd->bhd", plan.basis.astype(grad_coeffs.dtype), grad_coeffs)
