"""Residual vector quantization: codebooks, the residual cascade, EMA learning.

Each quantizer stage snaps its input to the nearest codebook entry under
squared Euclidean distance (ties to the lowest index); the next stage
quantizes what is left over. The quantized latent is the compensated sum of
the selected vectors, so decode reproduces encode's output bit for bit.
Codebooks learn through exponential moving averages of their assigned
residuals, never through loss gradients; entries whose EMA cluster size
decays below a threshold are reinitialized from recent residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_DECAY = 0.99
DEFAULT_EPSILON = 1e-5
DEFAULT_DEAD_THRESHOLD = 1.0


@dataclass
class Codebook:
    """One quantizer stage: K vectors plus their EMA accumulators."""

    vectors: np.ndarray  # (K, d)
    ema_cluster_size: np.ndarray = field(default=None)  # type: ignore[assignment]
    ema_embed_sum: np.ndarray = field(default=None)  # type: ignore[assignment]
    usage_count: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError("codebook must be a non-empty K x d matrix")
        k = self.vectors.shape[0]
        if self.ema_cluster_size is None:
            self.ema_cluster_size = np.ones(k, dtype=self.vectors.dtype)
            self.ema_embed_sum = self.vectors.copy()
        if self.usage_count is None:
            self.usage_count = np.zeros(k, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class CodebookBank:
    """N_c quantizer stages sharing decay and smoothing constants."""

    stages: list[Codebook]
    decay: float = DEFAULT_DECAY
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if len(self.stages) < 1:
            raise ValueError("bank needs at least one stage")
        if not 0.0 <= self.decay < 1.0:
            raise ValueError(f"decay must be in [0, 1), got {self.decay}")
        dims = {s.dim for s in self.stages}
        if len(dims) != 1:
            raise ValueError("all stages must share the latent dimension")

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def codebook_size(self) -> int:
        return self.stages[0].size

    @property
    def latent_dim(self) -> int:
        return self.stages[0].dim

    @classmethod
    def initialize(cls, n_stages: int, codebook_size: int, latent_dim: int, seed: int,
                   decay: float = DEFAULT_DECAY, epsilon: float = DEFAULT_EPSILON,
                   dtype=np.float32) -> "CodebookBank":
        """Seeded Gaussian init; each entry starts with one pseudo-count at itself."""
        if codebook_size < 2:
            raise ValueError(f"codebook size must be >= 2, got {codebook_size}")
        rng = np.random.Generator(np.random.PCG64(seed))
        stages = []
        for _ in range(n_stages):
            vectors = (rng.standard_normal((codebook_size, latent_dim)) / np.sqrt(latent_dim)).astype(dtype)
            stages.append(Codebook(vectors=vectors))
        return cls(stages=stages, decay=decay, epsilon=epsilon)


def quantize_one(vector: np.ndarray, codebook: Codebook) -> tuple[int, np.ndarray]:
    """Nearest entry under squared Euclidean distance; ties go to the lowest index."""
    vector = np.asarray(vector)
    if vector.shape != (codebook.dim,):
        raise ValueError(f"vector shape {vector.shape} != ({codebook.dim},)")
    diff = codebook.vectors - vector[None, :]
    idx = int(np.argmin(np.sum(diff * diff, axis=1)))
    return idx, codebook.vectors[idx].copy()


def _quantize_batch(flat: np.ndarray, codebook: Codebook) -> np.ndarray:
    # Elementwise (x - e)^2 rather than the expanded inner-product form, so
    # batched results agree exactly with quantize_one, ties included.
    diff = flat[:, None, :] - codebook.vectors[None, :, :]
    return np.argmin(np.einsum("nkd,nkd->nk", diff, diff), axis=1)


def rvq_encode(z: np.ndarray, bank: CodebookBank, collect_residuals: bool = False):
    """Run the residual cascade over every latent cell.

    z has shape (..., d). Returns (codes, z_q) where codes is (N_c, ...) int64
    and z_q the compensated sum of selected vectors. With collect_residuals,
    also returns the per-stage quantizer inputs (the EMA update targets).
    """
    z = np.asarray(z)
    if z.shape[-1] != bank.latent_dim:
        raise ValueError(f"latent dim {z.shape[-1]} != bank dim {bank.latent_dim}")
    lead = z.shape[:-1]
    flat = z.reshape(-1, bank.latent_dim)
    residual = flat.copy()
    z_q = np.zeros_like(flat)
    comp = np.zeros_like(flat)  # Kahan compensation
    codes = np.zeros((bank.n_stages,) + (flat.shape[0],), dtype=np.int64)
    stage_inputs = []
    for i, stage in enumerate(bank.stages):
        if collect_residuals:
            stage_inputs.append(residual.copy())
        idx = _quantize_batch(residual, stage)
        picked = stage.vectors[idx].astype(flat.dtype)
        codes[i] = idx
        y = picked - comp
        t = z_q + y
        comp = (t - z_q) - y
        z_q = t
        residual = residual - picked
    codes = codes.reshape((bank.n_stages,) + lead)
    z_q = z_q.reshape(z.shape)
    if collect_residuals:
        return codes, z_q, residual.reshape(z.shape), stage_inputs
    return codes, z_q, residual.reshape(z.shape)


def rvq_decode(codes: np.ndarray, bank: CodebookBank, dtype=None) -> np.ndarray:
    """Sum the looked-up vectors per cell, mirroring encode's accumulation."""
    codes = np.asarray(codes)
    if codes.shape[0] != bank.n_stages:
        raise ValueError(f"codes have {codes.shape[0]} stages, bank has {bank.n_stages}")
    if dtype is None:
        dtype = bank.stages[0].vectors.dtype
    lead = codes.shape[1:]
    flat = codes.reshape(bank.n_stages, -1)
    z_q = np.zeros((flat.shape[1], bank.latent_dim), dtype=dtype)
    comp = np.zeros_like(z_q)
    for i, stage in enumerate(bank.stages):
        idx = flat[i]
        if np.any(idx < 0) or np.any(idx >= stage.size):
            bad = int(idx[(idx < 0) | (idx >= stage.size)][0])
            raise ValueError(f"stage {i} index {bad} out of range [0, {stage.size})")
        y = stage.vectors[idx].astype(dtype) - comp
        t = z_q + y
        comp = (t - z_q) - y
        z_q = t
    return z_q.reshape(lead + (bank.latent_dim,))


def ste_passthrough(z: np.ndarray, z_q: np.ndarray) -> np.ndarray:
    """Forward value of the straight-through estimator.

    The value is z_q; in the training graph the gradient w.r.t. z is the
    identity and the codebooks receive none (they learn by EMA only).
    """
    if z.shape != z_q.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {z_q.shape}")
    return z_q


def ema_update(bank: CodebookBank, stage_inputs: list[np.ndarray], codes: np.ndarray) -> None:
    """One EMA step per stage from a batch of assignments.

    stage_inputs[i] holds the stage-i quantizer inputs (shape (..., d)) and
    codes[i] the chosen indices. Cluster sizes and embed sums decay toward
    the batch statistics; vectors are refreshed as embed_sum / cluster_size
    with Laplace smoothing over the stage. Sums are order-independent, so
    the update is invariant to batch permutation.
    """
    if len(stage_inputs) != bank.n_stages or codes.shape[0] != bank.n_stages:
        raise ValueError("need one input array and one code plane per stage")
    for i, stage in enumerate(bank.stages):
        flat = np.asarray(stage_inputs[i]).reshape(-1, stage.dim)
        idx = np.asarray(codes[i]).reshape(-1)
        counts = np.bincount(idx, minlength=stage.size).astype(stage.vectors.dtype)
        sums = np.zeros_like(stage.ema_embed_sum)
        np.add.at(sums, idx, flat.astype(sums.dtype))
        stage.ema_cluster_size = bank.decay * stage.ema_cluster_size + (1.0 - bank.decay) * counts
        stage.ema_embed_sum = bank.decay * stage.ema_embed_sum + (1.0 - bank.decay) * sums
        total = stage.ema_cluster_size.sum()
        if bank.epsilon > 0.0:
            smoothed = (stage.ema_cluster_size + bank.epsilon) / (total + stage.size * bank.epsilon) * total
        else:
            smoothed = np.where(stage.ema_cluster_size > 0, stage.ema_cluster_size, 1.0)
        stage.vectors = (stage.ema_embed_sum / smoothed[:, None]).astype(stage.vectors.dtype)
        stage.usage_count = stage.usage_count + np.bincount(idx, minlength=stage.size)


def reinit_dead_codes(bank: CodebookBank, stage_pools: list[np.ndarray], threshold: float,
                      rng: np.random.Generator) -> int:
    """Replace entries whose EMA cluster size fell below threshold.

    stage_pools[i] is a pool of recent stage-i residual inputs. Revived
    entries are drawn uniformly from the pool (without replacement when it
    is large enough), and their EMA state is reset to one pseudo-count at
    the new location. Returns the number of revived codes.
    """
    revived = 0
    for i, stage in enumerate(bank.stages):
        dead = np.flatnonzero(stage.ema_cluster_size < threshold)
        if dead.size == 0:
            continue
        pool = np.asarray(stage_pools[i]).reshape(-1, stage.dim)
        if pool.shape[0] == 0:
            raise ValueError(f"stage {i} has {dead.size} dead codes but an empty pool")
        replace = pool.shape[0] < dead.size
        picks = rng.choice(pool.shape[0], size=dead.size, replace=replace)
        fresh = pool[picks].astype(stage.vectors.dtype)
        stage.vectors[dead] = fresh
        stage.ema_cluster_size[dead] = 1.0
        stage.ema_embed_sum[dead] = fresh
        revived += int(dead.size)
    return revived


def reset_usage(bank: CodebookBank) -> None:
    for stage in bank.stages:
        stage.usage_count = np.zeros(stage.size, dtype=np.int64)
