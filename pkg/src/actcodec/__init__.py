"""actcodec: a residual-VQ codec for fixed-horizon robot action chunks.

The package covers the full codec lifecycle: synthesizing or ingesting
trajectory data, patchifying chunks into a 2-D token grid, training a
hybrid conv/attention autoencoder with residual vector quantization,
evaluating reconstruction quality, and simulating block-autoregressive
decoding over the resulting code tensors.
"""

from actcodec.trajectory import ActionChunk, NormalizationStats, RawTrajectory
from actcodec.patchify import PatchSpec, PatchGrid, patchify, unpatchify
from actcodec.rvq import Codebook, CodebookBank
from actcodec.codec import ChunkCodec, CodecConfig

__version__ = "0.1.0"

__all__ = [
    "ActionChunk",
    "NormalizationStats",
    "RawTrajectory",
    "PatchSpec",
    "PatchGrid",
    "patchify",
    "unpatchify",
    "Codebook",
    "CodebookBank",
    "ChunkCodec",
    "CodecConfig",
    "__version__",
]
