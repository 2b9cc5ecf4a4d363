"""Trajectory ingestion, normalization, chunking, and synthetic corpora.

Everything downstream of this module operates on fixed-horizon action
chunks with values in [-1, 1]. This module owns the conversion from raw
physical trajectories to that substrate, the on-disk trajectory container,
and the seeded synthetic generators used for desk-scale experiments.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRAJ_MAGIC = b"ACTTRAJ1"


@dataclass
class RawTrajectory:
    """A T x D stream of actions in arbitrary physical units."""

    values: np.ndarray
    dim_labels: list[str]
    frequency_hz: float = 10.0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"trajectory values must be T x D, got shape {self.values.shape}")
        t, d = self.values.shape
        if t < 1 or d < 1:
            raise ValueError(f"trajectory must have T >= 1 and D >= 1, got {t} x {d}")
        if len(self.dim_labels) != d:
            raise ValueError(f"expected {d} dim labels, got {len(self.dim_labels)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory contains non-finite values")
        if not self.frequency_hz > 0:
            raise ValueError(f"frequency_hz must be positive, got {self.frequency_hz}")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


@dataclass
class NormalizationStats:
    """Per-dimension percentile bounds mapping [q_low, q_high] -> [-1, 1]."""

    q_low: np.ndarray
    q_high: np.ndarray

    def __post_init__(self):
        self.q_low = np.asarray(self.q_low, dtype=np.float64)
        self.q_high = np.asarray(self.q_high, dtype=np.float64)
        if self.q_low.shape != self.q_high.shape or self.q_low.ndim != 1:
            raise ValueError("q_low and q_high must be 1-D arrays of equal length")
        if np.any(self.q_low > self.q_high):
            raise ValueError("q_low must not exceed q_high")

    @property
    def dims(self) -> int:
        return self.q_low.shape[0]

    @classmethod
    def identity(cls, dims: int) -> "NormalizationStats":
        """Stats under which normalization is the identity on [-1, 1]."""
        return cls(q_low=-np.ones(dims), q_high=np.ones(dims))

    def to_dict(self) -> dict:
        return {"q_low": self.q_low.tolist(), "q_high": self.q_high.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "NormalizationStats":
        return cls(q_low=np.array(payload["q_low"]), q_high=np.array(payload["q_high"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NormalizationStats":
        payload = json.loads(Path(path).read_text())
        return cls.from_dict(payload)


def save_stats_per_tag(path: str | Path, per_tag: dict) -> None:
    """Persist per-embodiment normalization stats keyed by manifest tag."""
    payload = {"per_tag": {tag: stats.to_dict() for tag, stats in per_tag.items()}}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_stats_file(path: str | Path):
    """Load a stats file: one global NormalizationStats or a per-tag dict."""
    payload = json.loads(Path(path).read_text())
    if "per_tag" in payload:
        return {tag: NormalizationStats.from_dict(p) for tag, p in payload["per_tag"].items()}
    return NormalizationStats.from_dict(payload)


@dataclass
class ActionChunk:
    """An H x D window of normalized actions plus a per-row validity mask.

    Rows with valid=False are zero padding appended to a partial final
    window; they are excluded from losses and reconstruction metrics.
    """

    values: np.ndarray
    embodiment_tag: str = "unknown"
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"chunk values must be H x D, got shape {self.values.shape}")
        if self.valid is None:
            self.valid = np.ones(self.values.shape[0], dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != (self.values.shape[0],):
            raise ValueError("valid mask must have one entry per timestep")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


def fit_normalizer(corpus: Sequence[RawTrajectory], low_pct: float = 1.0, high_pct: float = 99.0) -> NormalizationStats:
    """Pool all trajectory values and take per-dimension percentile bounds.

    Percentiles use linear interpolation over the pooled sample, so the
    result is independent of corpus order.
    """
    if len(corpus) == 0:
        raise ValueError("cannot fit normalizer on an empty corpus")
    dims = corpus[0].dims
    for traj in corpus:
        if traj.dims != dims:
            raise ValueError(f"dimension mismatch in corpus: {traj.dims} != {dims}")
    pooled = np.concatenate([traj.values for traj in corpus], axis=0)
    q_low, q_high = np.percentile(pooled, [low_pct, high_pct], axis=0)
    return NormalizationStats(q_low=q_low, q_high=q_high)


def normalize(traj: RawTrajectory, stats: NormalizationStats) -> RawTrajectory:
    """Map [q_low, q_high] -> [-1, 1] per dimension, clipping outside.

    Dimensions with a degenerate span (q_low == q_high) map to 0.
    """
    if traj.dims != stats.dims:
        raise ValueError(f"trajectory has {traj.dims} dims, stats have {stats.dims}")
    span = stats.q_high - stats.q_low
    safe_span = np.where(span > 0, span, 1.0)
    scaled = 2.0 * (traj.values - stats.q_low) / safe_span - 1.0
    scaled = np.where(span > 0, scaled, 0.0)
    return RawTrajectory(
        values=np.clip(scaled, -1.0, 1.0),
        dim_labels=list(traj.dim_labels),
        frequency_hz=traj.frequency_hz,
    )


def denormalize(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Inverse of normalize() on values inside [-1, 1]."""
    return stats.q_low + (np.asarray(values) + 1.0) * (stats.q_high - stats.q_low) / 2.0


def chunk(
    traj: RawTrajectory,
    horizon: int,
    stride: int,
    embodiment_tag: str = "unknown",
    pad_final: bool = True,
) -> list[ActionChunk]:
    """Cut a trajectory into horizon-length windows starting every `stride` steps.

    A window extending past the end is zero-padded to the horizon with its
    trailing rows marked invalid; pass pad_final=False to drop partial
    windows instead.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    total = traj.horizon
    chunks = []
    for start in range(0, total, stride):
        window = traj.values[start : start + horizon]
        n_real = window.shape[0]
        if n_real < horizon:
            if not pad_final:
                continue
            pad = np.zeros((horizon - n_real, traj.dims), dtype=window.dtype)
            window = np.concatenate([window, pad], axis=0)
        valid = np.arange(horizon) < n_real
        chunks.append(ActionChunk(values=window.copy(), embodiment_tag=embodiment_tag, valid=valid))
    return chunks


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

PROFILES = ("smooth", "piecewise", "gripper-binary")


_SMOOTH_FREQS = (0.25, 0.5, 1.0)  # cycles per chunk: mostly sub-cycle trends
_SMOOTH_AMPS = (1.0, 0.4, 0.15)  # low frequencies dominate


def _smooth_chunk(rng: np.random.Generator, horizon: int, dims: int, resp: dict) -> np.ndarray:
    # Sum of fixed low-frequency sinusoids with per-chunk random amplitude
    # and phase (one cos/sin coefficient pair per frequency). Per-dimension
    # gain and phase offset are corpus-level constants, so every chunk lies
    # on one low-dimensional manifold and values stay inside [-1, 1].
    u = rng.uniform(-1.0, 1.0, size=2 * len(_SMOOTH_FREQS))
    t = np.arange(horizon) / horizon
    theta = 2.0 * np.pi * np.asarray(_SMOOTH_FREQS)[None, :, None] * t[:, None, None] \
        + resp["detune"][None, None, :]
    amps = np.asarray(_SMOOTH_AMPS) / sum(_SMOOTH_AMPS)
    wave = np.einsum("q,tqd->td", u[0::2] * amps, np.cos(theta)) \
        + np.einsum("q,tqd->td", u[1::2] * amps, np.sin(theta))
    return resp["gain"][None, :] * wave


def _piecewise_chunk(rng: np.random.Generator, horizon: int, dims: int) -> np.ndarray:
    # Held setpoints joined by short linear ramps.
    values = np.zeros((horizon, dims))
    for j in range(dims):
        pos = 0
        level = rng.uniform(-0.9, 0.9)
        while pos < horizon:
            hold = int(rng.integers(3, 8))
            end = min(pos + hold, horizon)
            values[pos:end, j] = level
            pos = end
            if pos >= horizon:
                break
            target = rng.uniform(-0.9, 0.9)
            ramp = int(rng.integers(2, 5))
            end = min(pos + ramp, horizon)
            steps = end - pos
            values[pos:end, j] = level + (target - level) * (np.arange(1, steps + 1) / ramp)
            level = level + (target - level) * (steps / ramp)
            pos = end
    return values


def synth_corpus(seed: int, n: int, horizon: int, dims: int, profile: str) -> list[ActionChunk]:
    """Generate n deterministic chunks for the given profile.

    smooth: sums of low-frequency sinusoids; piecewise: held setpoints with
    ramps; gripper-binary: smooth body dims with the last dim restricted to
    {-1, +1} and rare toggles.
    """
    if n < 1:
        raise ValueError(f"corpus size must be >= 1, got {n}")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    rng = np.random.Generator(np.random.PCG64(seed))
    resp = {
        "gain": rng.uniform(0.5, 0.95, size=dims),
        "detune": rng.uniform(0.0, np.pi / 2, size=dims),
    }
    chunks = []
    for _ in range(n):
        if profile == "smooth":
            values = _smooth_chunk(rng, horizon, dims, resp)
        elif profile == "piecewise":
            values = _piecewise_chunk(rng, horizon, dims)
        else:
            body = _smooth_chunk(rng, horizon, max(dims - 1, 1), resp={"gain": resp["gain"][: max(dims - 1, 1)], "detune": resp["detune"][: max(dims - 1, 1)]})
            grip = np.full(horizon, -1.0 if rng.uniform() < 0.5 else 1.0)
            n_toggles = int(rng.integers(0, 3))
            for pos in sorted(rng.integers(1, horizon, size=n_toggles).tolist()):
                grip[pos:] = -grip[pos - 1]
            values = np.concatenate([body[:, : dims - 1], grip[:, None]], axis=1) if dims > 1 else grip[:, None]
        chunks.append(ActionChunk(values=values, embodiment_tag=f"synthetic-{profile}"))
    return chunks


# ---------------------------------------------------------------------------
# On-disk container and manifest
# ---------------------------------------------------------------------------


def save_trajectories(path: str | Path, trajectories: Iterable[RawTrajectory]) -> None:
    """Write a record-per-trajectory container.

    Layout: 8-byte magic, then per record a little-endian header
    (D: u32, T: u32, frequency: f64, label blob length: u32), the
    newline-joined utf-8 labels, and T*D row-major float32 values.
    """
    with open(path, "wb") as fh:
        fh.write(TRAJ_MAGIC)
        for traj in trajectories:
            labels = "\n".join(traj.dim_labels).encode("utf-8")
            fh.write(struct.pack("<IIdI", traj.dims, traj.horizon, traj.frequency_hz, len(labels)))
            fh.write(labels)
            fh.write(np.ascontiguousarray(traj.values, dtype="<f4").tobytes())


def load_trajectories(path: str | Path) -> list[RawTrajectory]:
    data = Path(path).read_bytes()
    if data[:8] != TRAJ_MAGIC:
        raise ValueError(f"{path}: not a trajectory container (bad magic)")
    offset = 8
    out = []
    header = struct.Struct("<IIdI")
    while offset < len(data):
        dims, horizon, freq, label_len = header.unpack_from(data, offset)
        offset += header.size
        labels = data[offset : offset + label_len].decode("utf-8").split("\n")
        offset += label_len
        count = horizon * dims
        values = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(horizon, dims)
        offset += count * 4
        out.append(RawTrajectory(values=values.astype(np.float32), dim_labels=labels, frequency_hz=freq))
    return out


def save_chunks(path: str | Path, chunks: Sequence[ActionChunk]) -> None:
    """Persist chunks as horizon-length trajectory records (masks all-true)."""
    trajs = [
        RawTrajectory(values=c.values, dim_labels=[f"dim{i}" for i in range(c.dims)])
        for c in chunks
    ]
    save_trajectories(path, trajs)


def write_manifest(path: str | Path, entries: Sequence[tuple[str, str]], normalized: bool = False) -> None:
    """Write a plain-text manifest: one `file<TAB>embodiment_tag` line per entry."""
    lines = ["# actcodec dataset manifest"]
    if normalized:
        lines.append("@normalized")
    lines += [f"{name}\t{tag}" for name, tag in entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> tuple[list[tuple[str, str]], bool]:
    """Return (entries, normalized) where entries are (file, embodiment_tag)."""
    entries = []
    normalized = False
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == "@normalized":
            normalized = True
            continue
        parts = line.split("\t")
        if len(parts) == 1:
            parts = line.rsplit(None, 1)
        if len(parts) != 2:
            raise ValueError(f"bad manifest line: {line!r}")
        entries.append((parts[0], parts[1]))
    return entries, normalized


def fit_normalizer_per_tag(manifest_path: str | Path) -> dict[str, NormalizationStats]:
    """Fit percentile bounds separately for each embodiment tag in a manifest."""
    manifest_path = Path(manifest_path)
    entries, _ = read_manifest(manifest_path)
    by_tag: dict[str, list[RawTrajectory]] = {}
    for name, tag in entries:
        by_tag.setdefault(tag, []).extend(load_trajectories(manifest_path.parent / name))
    return {tag: fit_normalizer(trajs) for tag, trajs in by_tag.items()}


def load_corpus(
    manifest_path: str | Path,
    horizon: int,
    stride: int,
    stats=None,
) -> list[ActionChunk]:
    """Load every manifest file, normalize unless flagged, and chunk.

    When the manifest carries @normalized, values are taken as-is; otherwise
    `stats` is required: one NormalizationStats applied globally, or a dict
    keyed by embodiment tag (the per-embodiment default of fit-norm).
    """
    manifest_path = Path(manifest_path)
    entries, normalized = read_manifest(manifest_path)
    chunks: list[ActionChunk] = []
    for name, tag in entries:
        file_path = manifest_path.parent / name
        for traj in load_trajectories(file_path):
            if not normalized:
                if stats is None:
                    raise ValueError("manifest is not @normalized and no stats were given")
                tag_stats = stats.get(tag) if isinstance(stats, dict) else stats
                if tag_stats is None:
                    raise ValueError(f"no normalization stats for embodiment tag {tag!r}")
                traj = normalize(traj, tag_stats)
            chunks.extend(chunk(traj, horizon, stride, embodiment_tag=tag))
    return chunks
