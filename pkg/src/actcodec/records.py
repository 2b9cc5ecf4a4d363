"""Binary record files for code tensors and chunk batches.

Both reuse the versioned checkpoint container, so every interchange file in
the pipeline shares one magic-tagged, bit-exact format.
"""

from __future__ import annotations

import numpy as np

from actcodec.checkpoint import load_checkpoint, save_checkpoint


def save_code_records(path, codes: np.ndarray, codec_meta: dict) -> None:
    """codes: (B, N_c, C_h, C_a) ints; codec_meta describes the producing codec."""
    codes = np.asarray(codes)
    if codes.ndim != 4:
        raise ValueError(f"expected (B, N_c, C_h, C_a) codes, got shape {codes.shape}")
    save_checkpoint(path, {"kind": "code-records", "codec": codec_meta},
                    {"codes": codes.astype(np.int32)})


def load_code_records(path) -> tuple[np.ndarray, dict]:
    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "code-records":
        raise ValueError(f"{path}: not a code-record file")
    return arrays["codes"].astype(np.int64), meta


def save_chunk_records(path, values: np.ndarray, valid: np.ndarray, tags: list[str]) -> None:
    """values: (B, H, D) float32; valid: (B, H) bool; one embodiment tag per chunk."""
    values = np.asarray(values, dtype=np.float32)
    valid = np.asarray(valid, dtype=bool)
    if values.ndim != 3 or valid.shape != values.shape[:2]:
        raise ValueError("values must be (B, H, D) with a matching (B, H) mask")
    if len(tags) != values.shape[0]:
        raise ValueError("need one embodiment tag per chunk")
    save_checkpoint(path, {"kind": "chunk-records", "tags": list(tags)},
                    {"values": values, "valid": valid})


def load_chunk_records(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "chunk-records":
        raise ValueError(f"{path}: not a chunk-record file")
    return arrays["values"], arrays["valid"].astype(bool), list(meta["tags"])
