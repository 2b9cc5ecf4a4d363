import numpy as np
import pytest

from actcodec.autoencoder import AutoencoderConfig, ChunkDecoder, ChunkEncoder
from actcodec.codec import ChunkCodec, CodecConfig
from actcodec.patchify import per_dim_spec
from actcodec.trajectory import synth_corpus


def libero_config(**kw):
    defaults = dict(patch=per_dim_spec(20, 7),
                    model=AutoencoderConfig(d_latent=8, d_model=32, n_heads=2, c_h=1, c_a=7),
                    n_stages=3, codebook_size=16, seed=0)
    defaults.update(kw)
    return CodecConfig(**defaults)


def corpus_values(n=6, seed=0):
    return np.stack([c.values for c in synth_corpus(seed, n, 20, 7, "smooth")]).astype(np.float32)


class TestShapes:
    def test_encode_shapes_libero(self):
        codec = ChunkCodec(libero_config())
        codes = codec.encode(corpus_values())
        assert codes.shape == (6, 3, 1, 7)
        assert codec.n_tokens == 21

    def test_latent_shape(self):
        codec = ChunkCodec(libero_config())
        z = codec.encode_latent(corpus_values())
        assert z.shape == (6, 1, 7, 8)

    def test_decode_shape_and_range(self):
        codec = ChunkCodec(libero_config())
        values = codec.decode(codec.encode(corpus_values()))
        assert values.shape == (6, 20, 7)
        assert np.all(np.abs(values) <= 1.0)  # tanh-bounded output

    def test_multi_cell_grid(self):
        cfg = CodecConfig(patch=per_dim_spec(32, 14, m=2),
                          model=AutoencoderConfig(d_latent=4, d_model=32, n_heads=2,
                                                  c_h=2, c_a=14),
                          n_stages=3, codebook_size=8)
        codec = ChunkCodec(cfg)
        rng = np.random.default_rng(0)
        values = rng.uniform(-1, 1, (2, 32, 14)).astype(np.float32)
        codes = codec.encode(values)
        assert codes.shape == (2, 3, 2, 14)
        assert codec.decode(codes).shape == (2, 32, 14)

    def test_cell_grid_must_fit_patch_grid(self):
        with pytest.raises(ValueError):
            CodecConfig(patch=per_dim_spec(20, 3),
                        model=AutoencoderConfig(c_h=1, c_a=7))


class TestDeterminism:
    def test_same_seed_same_params(self):
        a = ChunkCodec(libero_config(seed=5))
        b = ChunkCodec(libero_config(seed=5))
        for (name, pa), (_, pb) in zip(a.encoder.named_parameters(), b.encoder.named_parameters()):
            assert np.array_equal(pa, pb), name
        for sa, sb in zip(a.bank.stages, b.bank.stages):
            assert np.array_equal(sa.vectors, sb.vectors)

    def test_seed_changes_params(self):
        a = ChunkCodec(libero_config(seed=5))
        b = ChunkCodec(libero_config(seed=6))
        assert not np.array_equal(dict(a.encoder.named_parameters())["embed.w"],
                                  dict(b.encoder.named_parameters())["embed.w"])

    def test_encode_is_pure(self):
        codec = ChunkCodec(libero_config())
        values = corpus_values()
        assert np.array_equal(codec.encode(values), codec.encode(values))

    def test_zero_params_zero_latent(self):
        codec = ChunkCodec(libero_config())
        for _, param in codec.encoder.named_parameters():
            param[...] = 0.0
        z = codec.encode_latent(corpus_values())
        assert np.all(z == 0.0)


def test_encoder_rejects_bad_patch_shape():
    rng = np.random.Generator(np.random.PCG64(0))
    spec = per_dim_spec(20, 7)
    enc = ChunkEncoder(spec, AutoencoderConfig(d_latent=8, d_model=32, n_heads=2), rng)
    with pytest.raises(ValueError):
        enc.forward(np.zeros((1, 6, 20), dtype=np.float32))
    dec = ChunkDecoder(spec, AutoencoderConfig(d_latent=8, d_model=32, n_heads=2), rng)
    with pytest.raises(ValueError):
        dec.forward(np.zeros((1, 2, 7, 8), dtype=np.float32))


def test_autoencoder_config_validation():
    with pytest.raises(ValueError):
        AutoencoderConfig(d_model=30, n_heads=4)
    with pytest.raises(ValueError):
        AutoencoderConfig(activation="swish")
