import numpy as np
import pytest

from actcodec import bindings
from actcodec.codec import ChunkCodec
from actcodec.metrics import valid_reconstruction_rate
from actcodec.trajectory import synth_corpus


@pytest.fixture(scope="module")
def handle(mini_codec_ckpt):
    return bindings.load(mini_codec_ckpt)


def values(n=8, seed=1):
    return np.stack([c.values for c in synth_corpus(seed, n, 20, 7, "smooth")]).astype(np.float32)


def test_load_missing_file_raises(tmp_path):
    with pytest.raises((OSError, ValueError)):
        bindings.load(tmp_path / "nope.bin")


def test_handle_metadata(handle):
    assert handle.horizon == 20 and handle.dims == 7
    assert handle.n_tokens == 21
    assert handle.code_shape == (3, 1, 7)


def test_encode_decode_parity_with_codec(handle, mini_codec_ckpt):
    codec, _, _ = ChunkCodec.load(mini_codec_ckpt)
    batch = values()
    flat = bindings.encode(handle, batch)
    assert flat.shape == (8, 21)
    direct = codec.encode(batch).reshape(8, -1)
    assert np.array_equal(flat, direct)
    recon = bindings.decode(handle, flat)
    assert np.array_equal(recon, codec.decode(direct.reshape(8, 3, 1, 7)))


def test_single_chunk_interface(handle):
    chunk = values(1)[0]
    flat = bindings.encode(handle, chunk)
    assert flat.shape == (21,)
    recon = bindings.decode(handle, flat)
    assert recon.shape == (20, 7)
    batched = bindings.encode(handle, chunk[None])
    assert np.array_equal(flat, batched[0])


def test_double_load_independent_identical(mini_codec_ckpt):
    a = bindings.load(mini_codec_ckpt)
    b = bindings.load(mini_codec_ckpt)
    assert a.codec is not b.codec
    batch = values(4, seed=2)
    assert np.array_equal(bindings.encode(a, batch), bindings.encode(b, batch))


def test_shape_errors_name_expected_dims(handle):
    with pytest.raises(ValueError, match=r"\(20, 7\)"):
        bindings.encode(handle, np.zeros((20, 6), dtype=np.float32))
    with pytest.raises(ValueError, match="21"):
        bindings.decode(handle, np.zeros(20, dtype=np.int64))


def test_vrr_matches_metrics(handle):
    batch = values(6, seed=3)
    recon, _ = handle.codec.reconstruct(batch)
    expected = valid_reconstruction_rate(recon, batch, 0.5).vrr
    assert bindings.vrr(handle, batch, 0.5) == expected
