"""Plain-text run configuration: key = value files, suite presets, snapshots.

Config files are flat `key = value` text (hash comments allowed) so a run's
resolved snapshot is a diffable artifact. A `suite` key applies one of the
shipped per-embodiment presets (chunk size, dims, latent grid, stage count,
block size); any explicit key overrides the preset.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from actcodec.autoencoder import AutoencoderConfig
from actcodec.codec import CodecConfig
from actcodec.patchify import PatchSpec, per_dim_spec, preset_spec
from actcodec.training import TrainConfig

# Per-suite codec shapes. c_a follows the action DoF; the two 6-DoF suites
# are clamped to c_a=6 because a latent grid cannot be wider than the
# dimension-group grid.
SUITE_PRESETS: dict[str, dict] = {
    "libero": {"chunk_size": 20, "dims": 7, "c_a": 7, "c_h": 1, "n_stages": 3, "block_size": 7},
    "simpler": {"chunk_size": 10, "dims": 6, "c_a": 6, "c_h": 1, "n_stages": 3, "block_size": 7},
    "vlabench": {"chunk_size": 10, "dims": 7, "c_a": 7, "c_h": 1, "n_stages": 3, "block_size": 7},
    "galaxea": {"chunk_size": 32, "dims": 14, "c_a": 14, "c_h": 2, "n_stages": 3, "block_size": 7, "patch_m": 2},
    "xarm": {"chunk_size": 20, "dims": 7, "c_a": 7, "c_h": 1, "n_stages": 3, "block_size": 7},
    "r1lite": {"chunk_size": 32, "dims": 21, "c_a": 21, "c_h": 2, "n_stages": 3, "block_size": 8, "patch_m": 2},
    "bridge": {"chunk_size": 10, "dims": 6, "c_a": 6, "c_h": 1, "n_stages": 3, "block_size": 7},
    "droid": {"chunk_size": 20, "dims": 7, "c_a": 7, "c_h": 1, "n_stages": 3, "block_size": 7},
}

_DEFAULTS = {
    "suite": "",
    "chunk_size": 20,
    "dims": 7,
    "stride": 0,  # 0 means stride = chunk_size
    "patch_preset": "per-dim",
    "patch_m": 1,
    "c_h": 1,
    "c_a": 7,
    "n_stages": 3,
    "codebook_size": 256,
    "d_latent": 16,
    "d_model": 64,
    "n_layers_enc": 2,
    "n_layers_dec": 2,
    "n_heads": 4,
    "conv_kernel": 3,
    "activation": "gelu",
    "ema_decay": 0.99,
    "ema_epsilon": 1e-5,
    "dead_code_threshold": 1.0,
    "codec_seed": 0,
    "block_size": 7,
    # training
    "lr": 1e-4,
    "weight_decay": 0.1,
    "beta1": 0.9,
    "beta2": 0.95,
    "warmup_steps": 1000,
    "total_steps": 20000,
    "grad_clip_norm": 1.0,
    "batch_size": 64,
    "commitment_weight": 0.25,
    "seed": 0,
    "checkpoint_every": 5000,
}


def parse_kv_text(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key = value): {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(key: str, value, template):
    if isinstance(template, bool):
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    return str(value)


@dataclass
class RunConfig:
    """Resolved settings for one run: codec shape plus training schedule."""

    values: dict

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        return cls.from_kv(parse_kv_text(Path(path).read_text()), overrides)

    @classmethod
    def from_kv(cls, kv: dict, overrides: dict | None = None) -> "RunConfig":
        merged = dict(_DEFAULTS)
        suite = str(kv.get("suite", "")).strip()
        if suite:
            if suite not in SUITE_PRESETS:
                raise ValueError(f"unknown suite {suite!r}; options: {sorted(SUITE_PRESETS)}")
            merged.update(SUITE_PRESETS[suite])
            merged["suite"] = suite
        for key, value in kv.items():
            if key == "suite":
                continue
            if key not in _DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value, _DEFAULTS[key])
        if overrides:
            for key, value in overrides.items():
                if value is not None:
                    merged[key] = value
        if merged["stride"] == 0:
            merged["stride"] = merged["chunk_size"]
        return cls(values=merged)

    def __getitem__(self, key: str):
        return self.values[key]

    def patch_spec(self) -> PatchSpec:
        name = self["patch_preset"]
        if Path(name).is_file():  # explicit plan as a JSON file
            import json

            return PatchSpec.from_dict(json.loads(Path(name).read_text()))
        if name == "per-dim":
            return per_dim_spec(self["chunk_size"], self["dims"], m=self["patch_m"])
        return preset_spec(name, self["chunk_size"], self["dims"])

    def codec_config(self) -> CodecConfig:
        model = AutoencoderConfig(
            d_latent=self["d_latent"],
            d_model=self["d_model"],
            n_layers_enc=self["n_layers_enc"],
            n_layers_dec=self["n_layers_dec"],
            n_heads=self["n_heads"],
            conv_kernel=self["conv_kernel"],
            c_h=self["c_h"],
            c_a=self["c_a"],
            activation=self["activation"],
        )
        return CodecConfig(
            patch=self.patch_spec(),
            model=model,
            n_stages=self["n_stages"],
            codebook_size=self["codebook_size"],
            ema_decay=self["ema_decay"],
            ema_epsilon=self["ema_epsilon"],
            dead_code_threshold=self["dead_code_threshold"],
            seed=self["codec_seed"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self["lr"],
            weight_decay=self["weight_decay"],
            betas=(self["beta1"], self["beta2"]),
            warmup_steps=self["warmup_steps"],
            total_steps=self["total_steps"],
            grad_clip_norm=self["grad_clip_norm"],
            batch_size=self["batch_size"],
            commitment_weight=self["commitment_weight"],
            seed=self["seed"],
            checkpoint_every=self["checkpoint_every"],
        )

    def snapshot_text(self) -> str:
        lines = [f"{key} = {self.values[key]}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def write_snapshot(self, out_dir: str | Path, name: str = "resolved_config.txt") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        path.write_text(self.snapshot_text())
        return path
