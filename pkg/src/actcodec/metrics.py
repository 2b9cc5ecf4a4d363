"""Reconstruction and vocabulary metrics, plus a uniform-binning baseline.

The headline metric is the valid reconstruction rate: the fraction of
per-timestep action vectors whose reconstruction error has L1 norm below a
tolerance sigma. Tolerances here are in normalized action units; converting
to physical units (meters, radians) depends on the corpus normalization
stats and is up to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class VrrReport:
    sigma: float
    n_total: int
    n_valid: int

    @property
    def vrr(self) -> float:
        return self.n_valid / self.n_total if self.n_total else 0.0


def valid_reconstruction_rate(
    recons: np.ndarray,
    truths: np.ndarray,
    sigma: float,
    mask: np.ndarray | None = None,
    per_scalar: bool = False,
) -> VrrReport:
    """Count timesteps whose error norm is strictly below sigma.

    recons/truths: (N, H, D) aligned stacks (or a single (H, D) pair);
    mask: (N, H) validity, padded rows excluded from both counts. The error
    norm is the L1 norm of the D-vector per timestep; per_scalar=True
    instead counts every scalar entry against sigma.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    recons = np.asarray(recons)
    truths = np.asarray(truths)
    if recons.shape != truths.shape:
        raise ValueError(f"shape mismatch: {recons.shape} vs {truths.shape}")
    if recons.ndim == 2:
        recons = recons[None]
        truths = truths[None]
        mask = mask[None] if mask is not None else None
    if mask is None:
        mask = np.ones(recons.shape[:2], dtype=bool)
    err = np.abs(recons.astype(np.float64) - truths.astype(np.float64))
    if per_scalar:
        valid = (err < sigma) & mask[:, :, None]
        return VrrReport(sigma=sigma, n_total=int(mask.sum()) * recons.shape[2],
                         n_valid=int(valid.sum()))
    step_err = err.sum(axis=2)
    valid = (step_err < sigma) & mask
    return VrrReport(sigma=sigma, n_total=int(mask.sum()), n_valid=int(valid.sum()))


def compression_ratio(chunk_shape: tuple[int, int], n_tokens: int) -> float:
    """Raw scalars per chunk divided by discrete tokens per chunk."""
    h, d = chunk_shape
    if h < 1 or d < 1 or n_tokens < 1:
        raise ValueError("shapes and token count must be positive")
    return (h * d) / n_tokens


@dataclass
class CodeStats:
    vocab_size: int
    counts: np.ndarray
    thresholds: tuple[float, ...] = (1e-3, 2e-2)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def used(self) -> int:
        return int((self.counts > 0).sum())

    @property
    def usage_pct(self) -> float:
        return 100.0 * self.used / self.vocab_size

    @property
    def f_max_pct(self) -> float:
        return 100.0 * float(self.counts.max()) / self.total

    @property
    def entropy_norm(self) -> float:
        probs = self.counts[self.counts > 0] / self.total
        entropy = float(-(probs * np.log(probs)).sum())
        return entropy / math.log(self.vocab_size)

    @property
    def active_above(self) -> dict[float, int]:
        freq = self.counts / self.total
        return {t: int((freq > t).sum()) for t in self.thresholds}

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "total_tokens": self.total,
            "used": self.used,
            "usage_pct": self.usage_pct,
            "f_max_pct": self.f_max_pct,
            "entropy_norm": self.entropy_norm,
            "active_above": {str(t): n for t, n in self.active_above.items()},
        }


def code_stats(codes_stream, vocab_size: int, codebook_size: int | None = None,
               thresholds: tuple[float, ...] = (1e-3, 2e-2)) -> CodeStats:
    """Histogram statistics over flattened code tensors.

    codes_stream yields (N_c, C_h, C_a)-shaped (or any leading-stage-axis)
    integer arrays. Stages occupy disjoint vocabulary ranges: stage i's
    indices are offset by i * codebook_size, matching how a downstream
    policy's embedding table would see them. Pass codebook_size=None for an
    already-flat shared vocabulary.
    """
    counts = np.zeros(vocab_size, dtype=np.int64)
    n_seen = 0
    for codes in codes_stream:
        codes = np.asarray(codes)
        if codebook_size is not None:
            offsets = np.arange(codes.shape[0]).reshape((-1,) + (1,) * (codes.ndim - 1))
            flat = (codes + offsets * codebook_size).reshape(-1)
        else:
            flat = codes.reshape(-1)
        if flat.size and (flat.min() < 0 or flat.max() >= vocab_size):
            raise ValueError("code index outside vocabulary range")
        counts += np.bincount(flat, minlength=vocab_size)
        n_seen += 1
    if n_seen == 0 or counts.sum() == 0:
        raise ValueError("empty code stream")
    return CodeStats(vocab_size=vocab_size, counts=counts, thresholds=thresholds)


# ---------------------------------------------------------------------------
# Naive uniform-binning baseline
# ---------------------------------------------------------------------------


def binning_tokenize(values: np.ndarray, bins: int) -> np.ndarray:
    """Uniform per-scalar binning of [-1, 1]; token count equals H*D."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    values = np.asarray(values)
    idx = np.floor((values + 1.0) / 2.0 * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def binning_detokenize(tokens: np.ndarray, bins: int) -> np.ndarray:
    """Map bin indices back to bin centers."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    return -1.0 + (np.asarray(tokens) + 0.5) * 2.0 / bins


def vrr_sweep(reconstruct, corpus_values: np.ndarray, corpus_mask: np.ndarray,
              sigmas, tags=None, per_scalar: bool = False) -> dict:
    """VRR at each sigma, overall and broken down per embodiment tag.

    `reconstruct` maps (N, H, D) values to reconstructions; sweeping reuses
    one reconstruction pass. Returns {"sigmas", "overall", "by_tag"}.
    """
    recons = reconstruct(corpus_values)
    sigmas = sorted(float(s) for s in sigmas)
    overall = [
        valid_reconstruction_rate(recons, corpus_values, s, corpus_mask, per_scalar).vrr
        for s in sigmas
    ]
    by_tag: dict[str, list[float]] = {}
    if tags is not None:
        tags = np.asarray(tags)
        for tag in sorted(set(tags.tolist())):
            sel = tags == tag
            by_tag[tag] = [
                valid_reconstruction_rate(recons[sel], corpus_values[sel], s,
                                          corpus_mask[sel], per_scalar).vrr
                for s in sigmas
            ]
    return {"sigmas": sigmas, "overall": overall, "by_tag": by_tag}
