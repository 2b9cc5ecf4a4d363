"""The assembled chunk codec: patchify -> encode -> quantize -> decode.

A ChunkCodec owns the patch plan, the autoencoder parameters, and the
codebook bank. Encoding a batch of chunks yields one integer code tensor of
shape (N_c, C_h, C_a) per chunk; decoding sums the code vectors back into a
latent grid and reconstructs the chunk. Frozen codecs are pure and safe for
concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from actcodec.autoencoder import AutoencoderConfig, ChunkDecoder, ChunkEncoder
from actcodec.checkpoint import load_checkpoint, save_checkpoint
from actcodec.patchify import PatchSpec, patchify_batch, unpatchify_batch
from actcodec.rvq import CodebookBank, rvq_decode, rvq_encode


@dataclass(frozen=True)
class CodecConfig:
    patch: PatchSpec
    model: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    n_stages: int = 3
    codebook_size: int = 256
    ema_decay: float = 0.99
    ema_epsilon: float = 1e-5
    dead_code_threshold: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.model.validate_with(self.patch)
        if self.n_stages < 1:
            raise ValueError("need at least one quantizer stage")
        if self.codebook_size < 2:
            raise ValueError("codebook size must be >= 2")

    @property
    def n_tokens(self) -> int:
        return self.n_stages * self.model.c_h * self.model.c_a

    @property
    def vocab_size(self) -> int:
        """Stage-offset vocabulary size as seen by a downstream policy."""
        return self.n_stages * self.codebook_size

    def to_dict(self) -> dict:
        return {
            "patch": self.patch.to_dict(),
            "model": self.model.to_dict(),
            "n_stages": self.n_stages,
            "codebook_size": self.codebook_size,
            "ema_decay": self.ema_decay,
            "ema_epsilon": self.ema_epsilon,
            "dead_code_threshold": self.dead_code_threshold,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CodecConfig":
        payload = dict(payload)
        payload["patch"] = PatchSpec.from_dict(payload["patch"])
        payload["model"] = AutoencoderConfig.from_dict(payload["model"])
        return cls(**payload)


class ChunkCodec:
    def __init__(self, config: CodecConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self.encoder = ChunkEncoder(config.patch, config.model,
                                    np.random.Generator(np.random.PCG64(seeds[0])), dtype)
        self.decoder = ChunkDecoder(config.patch, config.model,
                                    np.random.Generator(np.random.PCG64(seeds[1])), dtype)
        self.bank = CodebookBank.initialize(
            config.n_stages, config.codebook_size, config.model.d_latent,
            seed=int(seeds[2].generate_state(1)[0]),
            decay=config.ema_decay, epsilon=config.ema_epsilon, dtype=dtype,
        )

    @property
    def n_tokens(self) -> int:
        return self.config.n_tokens

    def n_parameters(self) -> int:
        return self.encoder.n_parameters() + self.decoder.n_parameters()

    # -- inference ---------------------------------------------------------

    def encode_latent(self, values: np.ndarray) -> np.ndarray:
        """(B, H, D) chunk values -> (B, C_h, C_a, d_latent) latents."""
        patches = patchify_batch(np.asarray(values, dtype=self.dtype), self.config.patch)
        return self.encoder.forward(patches)

    def encode(self, values: np.ndarray) -> np.ndarray:
        """(B, H, D) chunk values -> (B, N_c, C_h, C_a) int codes."""
        z = self.encode_latent(values)
        codes, _, _ = rvq_encode(z, self.bank)
        return np.moveaxis(codes, 0, 1)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        """(B, N_c, C_h, C_a) codes -> (B, H, D) reconstructed values."""
        codes = np.asarray(codes)
        z_q = rvq_decode(np.moveaxis(codes, 1, 0), self.bank, dtype=self.dtype)
        patches = self.decoder.forward(z_q)
        return unpatchify_batch(patches, self.config.patch)

    def reconstruct(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        codes = self.encode(values)
        return self.decode(codes), codes

    # -- persistence -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for name, param in self.encoder.named_parameters("enc."):
            arrays[name] = param
        for name, param in self.decoder.named_parameters("dec."):
            arrays[name] = param
        for i, stage in enumerate(self.bank.stages):
            arrays[f"bank.{i}.vectors"] = stage.vectors
            arrays[f"bank.{i}.cluster_size"] = stage.ema_cluster_size
            arrays[f"bank.{i}.embed_sum"] = stage.ema_embed_sum
            arrays[f"bank.{i}.usage"] = stage.usage_count
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.encoder.load_state({k[4:]: v for k, v in arrays.items() if k.startswith("enc.")})
        self.decoder.load_state({k[4:]: v for k, v in arrays.items() if k.startswith("dec.")})
        for i, stage in enumerate(self.bank.stages):
            stage.vectors = arrays[f"bank.{i}.vectors"].astype(self.dtype)
            stage.ema_cluster_size = arrays[f"bank.{i}.cluster_size"].astype(self.dtype)
            stage.ema_embed_sum = arrays[f"bank.{i}.embed_sum"].astype(self.dtype)
            stage.usage_count = arrays[f"bank.{i}.usage"].astype(np.int64)

    def save(self, path, extra_meta: dict | None = None, extra_arrays: dict | None = None):
        meta = {"kind": "chunk-codec", "config": self.config.to_dict()}
        if extra_meta:
            meta.update(extra_meta)
        arrays = self.state_arrays()
        if extra_arrays:
            arrays.update(extra_arrays)
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path, dtype=np.float32) -> tuple["ChunkCodec", dict, dict[str, np.ndarray]]:
        """Load a codec; also returns checkpoint meta and any extra arrays."""
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "chunk-codec":
            raise ValueError(f"{path}: not a codec checkpoint")
        codec = cls(CodecConfig.from_dict(meta["config"]), dtype=dtype)
        own = {k for k in arrays if k.startswith(("enc.", "dec.", "bank."))}
        codec.load_state_arrays({k: arrays[k] for k in own})
        extras = {k: v for k, v in arrays.items() if k not in own}
        return codec, meta, extras
