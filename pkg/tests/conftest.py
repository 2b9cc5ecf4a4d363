import numpy as np
import pytest

from actcodec.autoencoder import AutoencoderConfig
from actcodec.codec import CodecConfig
from actcodec.patchify import per_dim_spec
from actcodec.training import TrainConfig, TrainState, run_training
from actcodec.trajectory import synth_corpus


@pytest.fixture(scope="session")
def mini_codec_ckpt(tmp_path_factory):
    """A briefly trained Libero-shaped codec checkpoint shared across tests."""
    out = tmp_path_factory.mktemp("mini_codec") / "ckpt.bin"
    config = CodecConfig(
        patch=per_dim_spec(20, 7),
        model=AutoencoderConfig(d_latent=4, d_model=16, n_layers_enc=1, n_layers_dec=1,
                                n_heads=2, c_h=1, c_a=7),
        n_stages=3, codebook_size=8, seed=0,
    )
    cfg = TrainConfig(lr=1e-3, warmup_steps=10, total_steps=60, batch_size=16,
                      seed=0, checkpoint_every=0)
    state = TrainState.fresh(config, cfg)
    values = np.stack([c.values for c in synth_corpus(3, 48, 20, 7, "smooth")]).astype(np.float32)
    run_training(state, values, np.ones(values.shape[:2], bool))
    state.codec.save(out)
    return out
