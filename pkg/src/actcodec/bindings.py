"""Array-in/array-out access to frozen codecs for ML pipelines.

Only inference is exposed: load a checkpoint, encode chunks to flat code
vectors, decode them back, and score round-trip reconstruction. Handles are
read-only after load and safe to share across threads. Results are bit-for-
bit identical to the CLI on the same inputs because both run the same code
path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from actcodec.codec import ChunkCodec
from actcodec.metrics import valid_reconstruction_rate


@dataclass(frozen=True)
class CodecHandle:
    codec: ChunkCodec

    @property
    def horizon(self) -> int:
        return self.codec.config.patch.H

    @property
    def dims(self) -> int:
        return self.codec.config.patch.D

    @property
    def n_tokens(self) -> int:
        return self.codec.n_tokens

    @property
    def code_shape(self) -> tuple[int, int, int]:
        cfg = self.codec.config
        return (cfg.n_stages, cfg.model.c_h, cfg.model.c_a)


def load(path) -> CodecHandle:
    codec, _, _ = ChunkCodec.load(path)
    return CodecHandle(codec=codec)


def _as_batch(handle: CodecHandle, chunk: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(chunk, dtype=np.float32)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (handle.horizon, handle.dims):
        raise ValueError(
            f"expected chunk shape ({handle.horizon}, {handle.dims}) "
            f"or a batch of them, got {np.asarray(chunk).shape}"
        )
    return arr, single


def encode(handle: CodecHandle, chunk: np.ndarray) -> np.ndarray:
    """H x D array -> flat N-vector of code ids (or (B, N) for a batch)."""
    batch, single = _as_batch(handle, chunk)
    codes = handle.codec.encode(batch).reshape(batch.shape[0], -1)
    return codes[0] if single else codes


def decode(handle: CodecHandle, codes: np.ndarray) -> np.ndarray:
    """Flat N-vector (or (B, N)) of code ids -> H x D array (or batch)."""
    arr = np.asarray(codes)
    single = arr.ndim == 1
    if single:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != handle.n_tokens:
        raise ValueError(f"expected {handle.n_tokens} codes per chunk, got shape {np.asarray(codes).shape}")
    values = handle.codec.decode(arr.reshape((arr.shape[0],) + handle.code_shape))
    return values[0] if single else values


def vrr(handle: CodecHandle, chunks: np.ndarray, sigma: float,
        per_scalar: bool = False) -> float:
    """Round-trip valid reconstruction rate of the codec on the given chunks."""
    batch, _ = _as_batch(handle, chunks)
    recon, _ = handle.codec.reconstruct(batch)
    return valid_reconstruction_rate(recon, batch, sigma, per_scalar=per_scalar).vrr
