"""Codec training: the three-term loss, the step loop, and resumable runs.

The loss is the sum of a time-domain L1 term, an L1 term on the orthonormal
DCT of the chunk along its time axis, and a commitment term pulling encoder
latents toward their (stop-gradient) quantized values. L1 terms are means
over real (unpadded) entries; the commitment term is a mean over latent
entries. Code vectors never receive loss gradients; they follow EMA updates
with dead-code reinitialization after every optimizer step.

Checkpoints carry the full mutable state (parameters, Adam moments, EMA
accumulators, RNG state), so a resumed run continues bit-for-bit like the
uninterrupted one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from actcodec.codec import ChunkCodec, CodecConfig
from actcodec.dct import DctPlan, dct_forward_batch, dct_forward_batch_grad
from actcodec.optim import AdamW, clip_by_global_norm, cosine_warmup_lr
from actcodec.patchify import patchify_batch, unpatchify_batch, unpatchify_batch_grad
from actcodec.rvq import ema_update, reinit_dead_codes, rvq_encode


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 0.1
    betas: tuple[float, float] = (0.9, 0.95)
    warmup_steps: int = 1000
    total_steps: int = 20000
    grad_clip_norm: float = 1.0
    batch_size: int = 64
    commitment_weight: float = 0.25
    seed: int = 0
    checkpoint_every: int = 5000

    def to_dict(self) -> dict:
        out = asdict(self)
        out["betas"] = list(self.betas)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        payload = dict(payload)
        payload["betas"] = tuple(payload["betas"])
        return cls(**payload)


class TrainingDiverged(RuntimeError):
    def __init__(self, record: dict):
        super().__init__(f"non-finite loss at step {record.get('step')}: {record}")
        self.record = record


class StopRequested(Exception):
    """Raised by an on_step callback to end a run early (state stays valid)."""


def vq_loss(values: np.ndarray, recon: np.ndarray, z: np.ndarray, z_q: np.ndarray,
            commitment_weight: float, mask: np.ndarray | None = None,
            plan: DctPlan | None = None, with_grads: bool = False):
    """Total loss and per-term breakdown; optionally gradients w.r.t. recon and z.

    values/recon: (B, H, D); z/z_q: (B, C_h, C_a, d_latent); mask: (B, H)
    bool with False on padded rows. The DCT runs over mask-zeroed signals and
    both L1 terms divide by the count of real entries.
    """
    values = np.asarray(values)
    recon = np.asarray(recon)
    b, h, d = values.shape
    if recon.shape != values.shape:
        raise ValueError(f"recon shape {recon.shape} != values shape {values.shape}")
    if mask is None:
        mask = np.ones((b, h), dtype=bool)
    if plan is None:
        plan = DctPlan(h)
    w = mask.astype(values.dtype)[:, :, None]
    n_real = float(w.sum()) * d
    if n_real <= 0:
        raise ValueError("mask excludes every row")

    diff = (recon - values) * w
    l1_time = float(np.abs(diff).sum() / n_real)

    coeff_diff = dct_forward_batch(diff, plan)  # DCT is linear: DCT(r*w) - DCT(v*w)
    l1_dct = float(np.abs(coeff_diff).sum() / n_real)

    commit_diff = z - z_q
    commit = float(np.mean(commit_diff.astype(np.float64) ** 2))
    total = l1_time + l1_dct + commitment_weight * commit
    terms = {"total": total, "l1_time": l1_time, "l1_dct": l1_dct, "commitment": commit}
    if not with_grads:
        return terms

    drecon = np.sign(diff) * w / np.asarray(n_real, dtype=values.dtype)
    dcoeff = np.sign(coeff_diff) / np.asarray(n_real, dtype=values.dtype)
    drecon = drecon + dct_forward_batch_grad(dcoeff, plan) * w
    dz = (2.0 * commitment_weight / commit_diff.size) * commit_diff
    return terms, drecon, dz.astype(z.dtype, copy=False)


@dataclass
class StepResult:
    terms: dict
    codes: np.ndarray
    grad_norm: float
    lr: float
    revived: int
    batch_codes_used: int


def train_step(codec: ChunkCodec, opt: AdamW, values: np.ndarray, mask: np.ndarray,
               cfg: TrainConfig, step: int, rng: np.random.Generator,
               plan: DctPlan) -> StepResult:
    """One optimizer step on a batch. `step` is the 1-based step being taken."""
    spec = codec.config.patch
    patches = patchify_batch(np.asarray(values, dtype=codec.dtype), spec)
    z = codec.encoder.forward(patches)
    codes, z_q, _, stage_inputs = rvq_encode(z, codec.bank, collect_residuals=True)
    recon_patches = codec.decoder.forward(z_q)  # straight-through: decoder sees z_q
    recon = unpatchify_batch(recon_patches, spec)

    terms, drecon, dz_commit = vq_loss(values.astype(codec.dtype), recon, z, z_q,
                                       cfg.commitment_weight, mask, plan, with_grads=True)
    if not math.isfinite(terms["total"]):
        raise TrainingDiverged({"step": step, **terms})

    codec.encoder.zero_grads()
    codec.decoder.zero_grads()
    dz_q = codec.decoder.backward(unpatchify_batch_grad(drecon, spec))
    codec.encoder.backward(dz_q + dz_commit)  # STE passes decoder grads straight to z

    params = dict(codec.encoder.named_parameters("enc."))
    params.update(codec.decoder.named_parameters("dec."))
    grads = dict(codec.encoder.named_grads("enc."))
    grads.update(codec.decoder.named_grads("dec."))
    grad_norm = clip_by_global_norm(grads, cfg.grad_clip_norm)
    lr = cosine_warmup_lr(step, cfg.lr, cfg.warmup_steps, cfg.total_steps)
    opt.step(params, grads, lr)

    ema_update(codec.bank, stage_inputs, codes)
    revived = reinit_dead_codes(codec.bank, stage_inputs, codec.config.dead_code_threshold, rng)
    used = sum(int(np.unique(codes[i]).size) for i in range(codes.shape[0]))
    return StepResult(terms=terms, codes=codes, grad_norm=grad_norm, lr=lr,
                      revived=revived, batch_codes_used=used)


@dataclass
class TrainState:
    codec: ChunkCodec
    opt: AdamW
    cfg: TrainConfig
    rng: np.random.Generator
    step: int = 0  # completed steps

    def save(self, path):
        rng_state = json.dumps(self.rng.bit_generator.state)
        extra_meta = {
            "train_config": self.cfg.to_dict(),
            "step": self.step,
            "rng_state": rng_state,
        }
        self.codec.save(path, extra_meta=extra_meta, extra_arrays=self.opt.state_arrays())

    @classmethod
    def load(cls, path) -> "TrainState":
        codec, meta, extras = ChunkCodec.load(path)
        cfg = TrainConfig.from_dict(meta["train_config"])
        params = dict(codec.encoder.named_parameters("enc."))
        params.update(codec.decoder.named_parameters("dec."))
        opt = AdamW(params, betas=cfg.betas, eps=1e-8, weight_decay=cfg.weight_decay)
        opt.load_state_arrays(extras)
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = json.loads(meta["rng_state"])
        return cls(codec=codec, opt=opt, cfg=cfg, rng=rng, step=meta["step"])

    @classmethod
    def fresh(cls, codec_config: CodecConfig, cfg: TrainConfig) -> "TrainState":
        codec = ChunkCodec(codec_config)
        params = dict(codec.encoder.named_parameters("enc."))
        params.update(codec.decoder.named_parameters("dec."))
        opt = AdamW(params, betas=cfg.betas, eps=1e-8, weight_decay=cfg.weight_decay)
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        return cls(codec=codec, opt=opt, cfg=cfg, rng=rng)


def run_training(state: TrainState, values: np.ndarray, mask: np.ndarray,
                 out_dir: str | Path | None = None, log_every: int = 1,
                 on_step=None) -> list[dict]:
    """Run (or continue) training until cfg.total_steps completed steps.

    values: (N, H, D) corpus; mask: (N, H). Writes `metrics.jsonl` (one record
    per step, append-only) and periodic `ckpt_step{S}.bin` checkpoints under
    out_dir. Deterministic given the state's RNG.
    """
    cfg = state.cfg
    plan = DctPlan(values.shape[1])
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "metrics.jsonl", "a")
    records = []
    try:
        while state.step < cfg.total_steps:
            step = state.step + 1
            idx = state.rng.integers(0, values.shape[0], size=cfg.batch_size)
            try:
                result = train_step(state.codec, state.opt, values[idx], mask[idx],
                                    cfg, step, state.rng, plan)
            except TrainingDiverged as exc:
                if log_fh is not None:
                    log_fh.write(json.dumps({"event": "diverged", **exc.record}) + "\n")
                raise
            state.step = step
            record = {
                "step": step,
                **{k: float(v) for k, v in result.terms.items()},
                "grad_norm": float(result.grad_norm),
                "lr": float(result.lr),
                "revived": int(result.revived),
                "batch_codes_used": int(result.batch_codes_used),
            }
            records.append(record)
            if log_fh is not None and step % log_every == 0:
                log_fh.write(json.dumps(record) + "\n")
            stop = False
            if on_step is not None:
                try:
                    on_step(state, record)
                except StopRequested:
                    stop = True
            periodic = cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0
            if out_dir is not None and (periodic or stop or step == cfg.total_steps):
                state.save(out_dir / f"ckpt_step{step}.bin")
                state.save(out_dir / "ckpt_latest.bin")
            if stop:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
    return records
