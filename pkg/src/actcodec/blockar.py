"""Block-autoregressive decoding over code tensors.

A code tensor is flattened codebook-major (all of stage 0 horizon by
horizon, then stage 1, ...) and split into contiguous blocks. Training uses
a block-wise causal mask: tokens see the prefix, every earlier block, and
their own block bidirectionally. Generation then emits one block per
forward pass instead of one token, so a schedule with J blocks needs J
passes instead of N.

The toy policy here is a small decoder-only attention model conditioned on
a synthetic context vector. It exists to exercise the schedule, mask,
control-token, and spacing machinery end to end; token ids live in the
stage-offset vocabulary (stage i index j maps to i * K + j) with two extra
control ids: a block-start token that is replicated B times to prompt the
first block, and a block-end token that pads short final blocks (padded
slots are excluded from the loss).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from actcodec import nn
from actcodec.optim import AdamW, clip_by_global_norm


@dataclass(frozen=True)
class BlockSchedule:
    """Flattened decoding order and block partition for one code tensor."""

    n_stages: int
    c_h: int
    c_a: int
    block_size: int
    flat_order: tuple[tuple[int, int, int], ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError(f"block size must be >= 1, got {self.block_size}")
        n = self.n_stages * self.c_h * self.c_a
        if self.block_size > n:
            raise ValueError(f"block size {self.block_size} exceeds token count {n}")
        if self.flat_order is None:
            order = tuple(
                (s, h, a)
                for s in range(self.n_stages)
                for h in range(self.c_h)
                for a in range(self.c_a)
            )
            object.__setattr__(self, "flat_order", order)

    @property
    def n_tokens(self) -> int:
        return self.n_stages * self.c_h * self.c_a

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.n_tokens / self.block_size)

    @property
    def padded_len(self) -> int:
        return self.n_blocks * self.block_size

    @property
    def block_bounds(self) -> list[tuple[int, int]]:
        return [
            (j * self.block_size, min((j + 1) * self.block_size, self.n_tokens))
            for j in range(self.n_blocks)
        ]

    def flatten(self, codes: np.ndarray) -> np.ndarray:
        """(..., N_c, C_h, C_a) codes -> (..., N) in decoding order."""
        s, h, a = zip(*self.flat_order)
        return codes[..., list(s), list(h), list(a)]

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        codes = np.zeros(flat.shape[:-1] + (self.n_stages, self.c_h, self.c_a), dtype=flat.dtype)
        for t, (s, h, a) in enumerate(self.flat_order):
            codes[..., s, h, a] = flat[..., t]
        return codes

    def stage_of(self, token_index: int) -> int:
        return self.flat_order[token_index][0]

    def to_dict(self) -> dict:
        return {"n_stages": self.n_stages, "c_h": self.c_h, "c_a": self.c_a,
                "block_size": self.block_size}


def build_schedule(n_stages: int, c_h: int, c_a: int, block_size: int) -> BlockSchedule:
    return BlockSchedule(n_stages=n_stages, c_h=c_h, c_a=c_a, block_size=block_size)


def build_mask(prefix_len: int, schedule: BlockSchedule) -> np.ndarray:
    """Boolean (S, S) visibility mask over prefix + padded action slots.

    Prefix tokens are causal among themselves; an action slot in block b
    sees the whole prefix, all blocks before b, and every slot of b itself.
    With block size 1 this is exactly the lower-triangular causal mask.
    """
    size = prefix_len + schedule.padded_len
    idx = np.arange(size)
    is_action = idx >= prefix_len
    block = np.where(is_action, (idx - prefix_len) // schedule.block_size, -1)
    mask = np.zeros((size, size), dtype=bool)
    q = idx[:, None]
    kk = idx[None, :]
    causal = kk <= q
    both_prefix = ~is_action[:, None] & ~is_action[None, :]
    mask |= both_prefix & causal
    mask |= is_action[:, None] & ~is_action[None, :]
    mask |= is_action[:, None] & is_action[None, :] & (block[None, :] <= block[:, None])
    return mask


@dataclass(frozen=True)
class PositionPlan:
    positions: np.ndarray
    jitter: int
    mode: str


def spacing_positions(n: int, jitter: int, mode: str, seed: int | None = None,
                      start: int = 0) -> PositionPlan:
    """Integer positions for n tokens.

    train: gaps of 1 + eps with eps uniform on {0..jitter}; infer: fixed
    gaps of 2. Both are strictly increasing; train is deterministic per seed.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if jitter < 0:
        raise ValueError(f"jitter must be >= 0, got {jitter}")
    if mode == "train":
        rng = np.random.Generator(np.random.PCG64(seed))
        gaps = 1 + rng.integers(0, jitter + 1, size=max(n - 1, 0))
        positions = start + np.concatenate([[0], np.cumsum(gaps)]).astype(np.int64)
    elif mode == "infer":
        positions = start + 2 * np.arange(n, dtype=np.int64)
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    return PositionPlan(positions=positions, jitter=jitter, mode=mode)


def sinusoid_encoding(positions: np.ndarray, d_model: int, dtype=np.float32) -> np.ndarray:
    """Fixed sin/cos encoding of arbitrary integer positions."""
    half = d_model // 2
    freq = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = positions[:, None].astype(np.float64) * freq[None, :]
    enc = np.zeros((positions.shape[0], d_model))
    enc[:, 0::2] = np.sin(angles)[:, : (d_model + 1) // 2]
    enc[:, 1::2] = np.cos(angles)[:, : d_model // 2]
    return enc.astype(dtype)


# ---------------------------------------------------------------------------
# Toy code policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    context_dim: int = 8
    jitter: int = 0  # spacing augmentation bound; 0 keeps unit spacing throughout
    activation: str = "gelu"


class CodePolicy(nn.Module):
    """Decoder-only attention model over stage-offset code tokens."""

    def __init__(self, n_stages: int, codebook_size: int, schedule: BlockSchedule,
                 cfg: PolicyConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.n_stages = n_stages
        self.codebook_size = codebook_size
        self.schedule = schedule
        self.cfg = cfg
        self.code_vocab = n_stages * codebook_size
        self.block_start_id = self.code_vocab
        self.block_end_id = self.code_vocab + 1
        rng = np.random.Generator(np.random.PCG64(seed))
        self.embed = self.add_module("embed", nn.Embedding(self.code_vocab + 2, cfg.d_model, rng, dtype))
        self.ctx_proj = self.add_module("ctx_proj", nn.Linear(cfg.context_dim, cfg.d_model, rng, dtype))
        self.blocks = [
            # conv_kernel=0: the token-mixing conv is non-causal and would
            # leak future blocks through the visibility mask
            self.add_module(f"block{i}", nn.Block(cfg.d_model, cfg.n_heads, 0, rng, cfg.activation, dtype))
            for i in range(cfg.n_layers)
        ]
        self.ln_f = self.add_module("ln_f", nn.LayerNorm(cfg.d_model, dtype))
        self.head = self.add_module("head", nn.Linear(cfg.d_model, self.code_vocab, rng, dtype))
        self.mask = build_mask(1, schedule)
        self._slot_positions_cache: np.ndarray | None = None

    # -- sequence assembly ---------------------------------------------------

    def offset_ids(self, codes: np.ndarray) -> np.ndarray:
        """(B, N_c, C_h, C_a) codes -> (B, N) stage-offset token ids in order."""
        flat = self.schedule.flatten(codes)
        stages = np.array([s for s, _, _ in self.schedule.flat_order])
        return flat + stages[None, :] * self.codebook_size

    def slot_positions(self, seed: int | None = None) -> np.ndarray:
        """Positions for [ctx] + J*B input slots.

        The context sits at 0 and every input slot takes one entry of a
        spacing plan over the padded length, so the B block-start replicas
        get distinct positions (with shared positions they would be
        permutation-symmetric under attention and could not address
        different slots of the first block). With jitter=0 the plan is unit
        spacing and identical at train and rollout time; with jitter>0
        training jitters and rollout uses the fixed infer spacing.
        """
        n_slots = self.schedule.padded_len
        if self.cfg.jitter == 0:
            if self._slot_positions_cache is not None and seed is None:
                return self._slot_positions_cache
            plan = spacing_positions(n_slots, 0, "train", seed=0, start=1)
        elif seed is None:
            plan = spacing_positions(n_slots, self.cfg.jitter, "infer", start=1)
        else:
            plan = spacing_positions(n_slots, self.cfg.jitter, "train", seed=seed, start=1)
        slots = np.concatenate([[0], plan.positions]).astype(np.int64)
        if self.cfg.jitter == 0 and seed is None:
            self._slot_positions_cache = slots
        return slots

    def input_ids(self, codes: np.ndarray) -> np.ndarray:
        """Teacher-forced inputs: block-start replicas then all but the last block."""
        ids = self.offset_ids(codes)
        b = ids.shape[0]
        bsz = self.schedule.block_size
        start = np.full((b, bsz), self.block_start_id, dtype=np.int64)
        body = ids[:, : (self.schedule.n_blocks - 1) * bsz]
        return np.concatenate([start, body], axis=1)

    def targets(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-slot targets over the padded length plus a real-token weight."""
        ids = self.offset_ids(codes)
        b = ids.shape[0]
        pad = self.schedule.padded_len - self.schedule.n_tokens
        targets = np.concatenate(
            [ids, np.full((b, pad), self.block_end_id, dtype=np.int64)], axis=1
        )
        weight = np.concatenate([np.ones((b, ids.shape[1])), np.zeros((b, pad))], axis=1)
        return targets, weight

    def stage_logit_mask(self) -> np.ndarray:
        """(padded_len, code_vocab) additive mask restricting slots to their stage."""
        mask = np.zeros((self.schedule.padded_len, self.code_vocab), dtype=np.float32)
        for t in range(self.schedule.padded_len):
            if t < self.schedule.n_tokens:
                s = self.schedule.stage_of(t)
                mask[t, : s * self.codebook_size] = -1e30
                mask[t, (s + 1) * self.codebook_size :] = -1e30
        return mask

    # -- forward/backward ------------------------------------------------------

    def forward(self, contexts: np.ndarray, input_ids: np.ndarray,
                positions: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Logits over code ids at every input slot: (B, S-1, code_vocab)."""
        ctx = self.ctx_proj.forward(contexts.astype(self.embed.w.dtype))[:, None, :]
        tok = self.embed.forward(input_ids)
        x = np.concatenate([ctx, tok], axis=1)
        x = x + sinusoid_encoding(positions, self.cfg.d_model, x.dtype)[None]
        for block in self.blocks:
            x = block.forward(x, mask)
        h = self.ln_f.forward(x)
        return self.head.forward(h)[:, 1:]

    def backward(self, dlogits_slots: np.ndarray):
        b = dlogits_slots.shape[0]
        dlogits = np.concatenate(
            [np.zeros((b, 1, self.code_vocab), dtype=dlogits_slots.dtype), dlogits_slots], axis=1
        )
        dx = self.ln_f.backward(self.head.backward(dlogits))
        for block in reversed(self.blocks):
            dx = block.backward(dx)
        self.embed.backward(dx[:, 1:])
        self.ctx_proj.backward(dx[:, 0])

    def loss(self, contexts: np.ndarray, codes: np.ndarray,
             position_seed: int | None = None, with_grads: bool = False):
        """Mean per-token cross-entropy of teacher-forced block prediction."""
        input_ids = self.input_ids(codes)
        positions = self.slot_positions(seed=position_seed)
        logits = self.forward(contexts, input_ids, positions, self.mask)
        logits = logits + self.stage_logit_mask()[None]
        targets, weight = self.targets(codes)
        flat_logits = logits.reshape(-1, self.code_vocab)
        loss, dflat, _ = nn.cross_entropy(flat_logits, targets.reshape(-1), weight.reshape(-1))
        if not with_grads:
            return loss
        self.zero_grads()
        self.backward(dflat.reshape(logits.shape))
        return loss


def train_policy(policy: CodePolicy, contexts: np.ndarray, codes: np.ndarray,
                 steps: int = 2000, lr: float = 3e-3, grad_clip: float = 1.0,
                 jitter_seed: int = 0, log_every: int = 0) -> list[float]:
    """Full-batch teacher-forced training; returns the loss curve."""
    opt = AdamW(dict(policy.named_parameters()), betas=(0.9, 0.95), weight_decay=0.0)
    curve = []
    for step in range(steps):
        seed = jitter_seed + step if policy.cfg.jitter > 0 else None
        loss = policy.loss(contexts, codes, position_seed=seed, with_grads=True)
        grads = dict(policy.named_grads())
        clip_by_global_norm(grads, grad_clip)
        opt.step(dict(policy.named_parameters()), grads, lr)
        curve.append(loss)
        if log_every and (step + 1) % log_every == 0:
            print(f"policy step {step + 1}: loss {loss:.4f}")
    return curve


@dataclass
class RolloutResult:
    codes: np.ndarray  # (N_c, C_h, C_a)
    pass_count: int


def decode_rollout(policy: CodePolicy, context: np.ndarray, top_k: int = 1,
                   temperature: float = 1.0, seed: int = 0) -> RolloutResult:
    """Generate one code tensor block by block.

    Each pass feeds the sequence so far (context, block-start replicas, then
    every previously emitted block) and samples the next block from the
    logits at the last block's slots. top_k=1 is greedy and deterministic.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    sched = policy.schedule
    bsz = sched.block_size
    rng = np.random.Generator(np.random.PCG64(seed))
    positions_full = policy.slot_positions(seed=None)
    stage_mask = policy.stage_logit_mask()
    full_mask = policy.mask
    emitted: list[np.ndarray] = []
    input_ids = np.full((1, bsz), policy.block_start_id, dtype=np.int64)
    passes = 0
    for j in range(sched.n_blocks):
        s = input_ids.shape[1]
        logits = policy.forward(context[None], input_ids, positions_full[: 1 + s],
                                full_mask[: 1 + s, : 1 + s])
        passes += 1
        lo, hi = sched.block_bounds[j]
        slot_logits = logits[0, s - bsz :] + stage_mask[j * bsz : (j + 1) * bsz]
        block_ids = np.zeros(bsz, dtype=np.int64)
        for o in range(hi - lo):
            row = slot_logits[o] / temperature
            keep = np.argsort(row)[::-1][:top_k]
            if top_k == 1:
                pick = keep[0]
            else:
                probs = nn.softmax(row[keep])
                pick = keep[rng.choice(top_k, p=probs)]
            block_ids[o] = pick
        emitted.append(block_ids[: hi - lo])
        if j + 1 < sched.n_blocks:
            nxt = np.full(bsz, policy.block_end_id, dtype=np.int64)
            nxt[: hi - lo] = block_ids[: hi - lo]
            input_ids = np.concatenate([input_ids, nxt[None]], axis=1)
    flat = np.concatenate(emitted)
    stages = np.array([s for s, _, _ in sched.flat_order])
    codes = sched.unflatten((flat - stages * policy.codebook_size)[None])[0]
    return RolloutResult(codes=codes, pass_count=passes)


def schedule_to_text(schedule: BlockSchedule) -> str:
    """Plain-text descriptor, shipped alongside codec checkpoints."""
    lines = ["# actcodec block schedule"]
    for key, value in schedule.to_dict().items():
        lines.append(f"{key} = {value}")
    lines.append(f"n_tokens = {schedule.n_tokens}")
    lines.append(f"n_blocks = {schedule.n_blocks}")
    return "\n".join(lines) + "\n"


def schedule_from_text(text: str) -> BlockSchedule:
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        fields[key] = int(value)
    try:
        return build_schedule(fields["n_stages"], fields["c_h"], fields["c_a"],
                              fields["block_size"])
    except KeyError as exc:
        raise ValueError(f"schedule descriptor missing field {exc}")


# ---------------------------------------------------------------------------
# Latency accounting
# ---------------------------------------------------------------------------


def latency_model(per_pass_ms: float, schedule: BlockSchedule, extras: dict[str, float],
                  mode: str = "bar") -> dict[str, float]:
    """Accounting model of end-to-end decode latency (not a measurement).

    Block mode needs one forward pass per block; token mode one per token.
    The total is the pass term plus every named extra (encoders,
    detokenization, ...).
    """
    if per_pass_ms <= 0 or any(v < 0 for v in extras.values()):
        raise ValueError("stage times must be positive")
    if mode == "bar":
        passes = schedule.n_blocks
    elif mode == "ar":
        passes = schedule.n_tokens
    else:
        raise ValueError(f"mode must be 'ar' or 'bar', got {mode!r}")
    breakdown = dict(extras)
    breakdown["decode_passes"] = per_pass_ms * passes
    breakdown["pass_count"] = passes
    breakdown["total"] = float(sum(v for k, v in breakdown.items() if k != "pass_count"))
    return breakdown
