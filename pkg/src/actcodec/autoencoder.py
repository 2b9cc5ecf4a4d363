"""Hybrid conv/attention autoencoder between patch grids and latent cells.

The encoder embeds each patch row, mixes tokens with depthwise-conv +
self-attention + MLP blocks, then mean-pools the (m, n) token grid down to
the (C_h, C_a) latent grid and projects to the latent width. The decoder
mirrors it: project up, broadcast cells back to tokens, run blocks, and map
each token to its patch row through a tanh so outputs stay in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from actcodec import nn
from actcodec.patchify import PatchSpec


@dataclass(frozen=True)
class AutoencoderConfig:
    d_latent: int = 16
    d_model: int = 64
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    n_heads: int = 4
    conv_kernel: int = 3
    c_h: int = 1
    c_a: int = 7
    activation: str = "gelu"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.activation not in ("relu", "gelu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_cells(self) -> int:
        return self.c_h * self.c_a

    def validate_with(self, spec: PatchSpec):
        if self.n_cells > spec.n_patches:
            raise ValueError(
                f"latent grid {self.c_h}x{self.c_a} has more cells than the "
                f"{spec.m}x{spec.n} patch grid has tokens"
            )
        if self.c_h > spec.m or self.c_a > spec.n:
            raise ValueError(
                f"latent grid ({self.c_h},{self.c_a}) must fit per-axis inside "
                f"patch grid ({spec.m},{spec.n})"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "AutoencoderConfig":
        return cls(**payload)


class ChunkEncoder(nn.Module):
    def __init__(self, spec: PatchSpec, cfg: AutoencoderConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        cfg.validate_with(spec)
        self.cfg = cfg
        self.spec = spec
        self.embed = self.add_module("embed", nn.Linear(spec.patch_width, cfg.d_model, rng, dtype))
        self.pos = self.add_module("pos", nn.PositionEmbedding(spec.n_patches, cfg.d_model, rng, dtype))
        self.blocks = [
            self.add_module(f"block{i}", nn.Block(cfg.d_model, cfg.n_heads, cfg.conv_kernel, rng,
                                                  cfg.activation, dtype))
            for i in range(cfg.n_layers_enc)
        ]
        self.ln_f = self.add_module("ln_f", nn.LayerNorm(cfg.d_model, dtype))
        self.pool = self.add_module("pool", nn.GridPool(spec.m, spec.n, cfg.c_h, cfg.c_a, dtype))
        self.to_latent = self.add_module("to_latent", nn.Linear(cfg.d_model, cfg.d_latent, rng, dtype))

    def forward(self, patches: np.ndarray) -> np.ndarray:
        """(B, m*n, h*d) patches -> (B, C_h, C_a, d_latent) latents."""
        if patches.shape[1:] != (self.spec.n_patches, self.spec.patch_width):
            raise ValueError(
                f"patch batch shape {patches.shape[1:]} does not match "
                f"({self.spec.n_patches}, {self.spec.patch_width})"
            )
        x = self.pos.forward(self.embed.forward(patches))
        for block in self.blocks:
            x = block.forward(x)
        x = self.pool.forward(self.ln_f.forward(x))
        z = self.to_latent.forward(x)
        b = z.shape[0]
        return z.reshape(b, self.cfg.c_h, self.cfg.c_a, self.cfg.d_latent)

    def backward(self, dz: np.ndarray) -> np.ndarray:
        b = dz.shape[0]
        dx = self.to_latent.backward(dz.reshape(b, self.cfg.n_cells, self.cfg.d_latent))
        dx = self.ln_f.backward(self.pool.backward(dx))
        for block in reversed(self.blocks):
            dx = block.backward(dx)
        return self.embed.backward(self.pos.backward(dx))


class ChunkDecoder(nn.Module):
    def __init__(self, spec: PatchSpec, cfg: AutoencoderConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        cfg.validate_with(spec)
        self.cfg = cfg
        self.spec = spec
        self.from_latent = self.add_module("from_latent", nn.Linear(cfg.d_latent, cfg.d_model, rng, dtype))
        self.up = self.add_module("up", nn.GridUpsample(cfg.c_h, cfg.c_a, spec.m, spec.n, dtype))
        self.pos = self.add_module("pos", nn.PositionEmbedding(spec.n_patches, cfg.d_model, rng, dtype))
        self.blocks = [
            self.add_module(f"block{i}", nn.Block(cfg.d_model, cfg.n_heads, cfg.conv_kernel, rng,
                                                  cfg.activation, dtype))
            for i in range(cfg.n_layers_dec)
        ]
        self.ln_f = self.add_module("ln_f", nn.LayerNorm(cfg.d_model, dtype))
        self.head = self.add_module("head", nn.Linear(cfg.d_model, spec.patch_width, rng, dtype))
        self.out_act = self.add_module("out_act", nn.Activation("tanh"))

    def forward(self, z_q: np.ndarray) -> np.ndarray:
        """(B, C_h, C_a, d_latent) latents -> (B, m*n, h*d) patches in [-1, 1]."""
        if z_q.shape[1:] != (self.cfg.c_h, self.cfg.c_a, self.cfg.d_latent):
            raise ValueError(
                f"latent shape {z_q.shape[1:]} does not match "
                f"({self.cfg.c_h}, {self.cfg.c_a}, {self.cfg.d_latent})"
            )
        b = z_q.shape[0]
        x = self.from_latent.forward(z_q.reshape(b, self.cfg.n_cells, self.cfg.d_latent))
        x = self.pos.forward(self.up.forward(x))
        for block in self.blocks:
            x = block.forward(x)
        return self.out_act.forward(self.head.forward(self.ln_f.forward(x)))

    def backward(self, dpatches: np.ndarray) -> np.ndarray:
        dx = self.ln_f.backward(self.head.backward(self.out_act.backward(dpatches)))
        for block in reversed(self.blocks):
            dx = block.backward(dx)
        dx = self.up.backward(self.pos.backward(dx))
        dz = self.from_latent.backward(dx)
        b = dz.shape[0]
        return dz.reshape(b, self.cfg.c_h, self.cfg.c_a, self.cfg.d_latent)
