"""2-D partitioning of action chunks into patch tokens and its exact inverse.

A chunk's time axis is split uniformly into m groups of length h; its
action dimensions are split non-uniformly into n groups, each padded to the
widest group's size d. The result is an (m*n) x (h*d) patch matrix whose
rows feed the autoencoder. Padding slots are zero and masked out, and the
round trip is exact on real slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from actcodec.trajectory import ActionChunk


@dataclass(frozen=True)
class PatchSpec:
    """Partition plan for an H x D chunk.

    Within a patch the layout is time-major: h consecutive timesteps, each
    contributing d dimension slots (real group dims first, zeros after).
    """

    m: int
    h: int
    groups: tuple[tuple[int, ...], ...]
    H: int
    D: int
    d: int = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(g) for g in self.groups))
        if self.m * self.h != self.H:
            raise ValueError(f"m*h must equal H: {self.m}*{self.h} != {self.H}")
        widest = max(len(g) for g in self.groups)
        if self.d == 0:
            object.__setattr__(self, "d", widest)
        if widest > self.d:
            raise ValueError(f"group of size {widest} exceeds pad width d={self.d}")
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(self.D)):
            raise ValueError("groups must partition the dimension indices 0..D-1")

    @property
    def n(self) -> int:
        return len(self.groups)

    @property
    def n_patches(self) -> int:
        return self.m * self.n

    @property
    def patch_width(self) -> int:
        return self.h * self.d

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "h": self.h,
            "d": self.d,
            "H": self.H,
            "D": self.D,
            "groups": [list(g) for g in self.groups],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PatchSpec":
        return cls(
            m=payload["m"],
            h=payload["h"],
            d=payload["d"],
            H=payload["H"],
            D=payload["D"],
            groups=tuple(tuple(g) for g in payload["groups"]),
        )


@dataclass
class PatchGrid:
    """(m*n) x (h*d) patch matrix with a same-shape validity mask."""

    patches: np.ndarray
    pad_mask: np.ndarray  # True where the slot holds a real chunk value

    def __post_init__(self):
        if self.patches.shape != self.pad_mask.shape:
            raise ValueError("patches and pad_mask shapes differ")


def _slot_index(spec: PatchSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-patch gather indices: (t_index, d_index, real_mask), each (m*n, h*d)."""
    t_idx = np.zeros((spec.n_patches, spec.patch_width), dtype=np.int64)
    d_idx = np.zeros((spec.n_patches, spec.patch_width), dtype=np.int64)
    real = np.zeros((spec.n_patches, spec.patch_width), dtype=bool)
    for i in range(spec.m):
        for j, group in enumerate(spec.groups):
            p = i * spec.n + j
            for t_local in range(spec.h):
                base = t_local * spec.d
                for s, dim in enumerate(group):
                    t_idx[p, base + s] = i * spec.h + t_local
                    d_idx[p, base + s] = dim
                    real[p, base + s] = True
    return t_idx, d_idx, real


def patchify(chunk: ActionChunk, spec: PatchSpec) -> PatchGrid:
    """Rearrange an H x D chunk into its (m*n) x (h*d) patch grid."""
    if chunk.values.shape != (spec.H, spec.D):
        raise ValueError(f"chunk shape {chunk.values.shape} does not match spec ({spec.H}, {spec.D})")
    t_idx, d_idx, real = _slot_index(spec)
    patches = np.where(real, chunk.values[t_idx, d_idx], 0.0)
    return PatchGrid(patches=patches.astype(chunk.values.dtype, copy=False), pad_mask=real)


def unpatchify(grid: PatchGrid, spec: PatchSpec, embodiment_tag: str = "unknown") -> ActionChunk:
    """Exact inverse of patchify on real slots; padding slots are discarded."""
    if grid.patches.shape != (spec.n_patches, spec.patch_width):
        raise ValueError(
            f"grid shape {grid.patches.shape} does not match spec "
            f"({spec.n_patches}, {spec.patch_width})"
        )
    t_idx, d_idx, real = _slot_index(spec)
    values = np.zeros((spec.H, spec.D), dtype=grid.patches.dtype)
    values[t_idx[real], d_idx[real]] = grid.patches[real]
    return ActionChunk(values=values, embodiment_tag=embodiment_tag)


def patchify_batch(values: np.ndarray, spec: PatchSpec) -> np.ndarray:
    """Vectorized patchify over (B, H, D) values -> (B, m*n, h*d)."""
    if values.shape[1:] != (spec.H, spec.D):
        raise ValueError(f"batch shape {values.shape[1:]} does not match spec ({spec.H}, {spec.D})")
    t_idx, d_idx, real = _slot_index(spec)
    out = np.where(real[None], values[:, t_idx, d_idx], 0.0)
    return out.astype(values.dtype, copy=False)


def unpatchify_batch(patches: np.ndarray, spec: PatchSpec) -> np.ndarray:
    """Vectorized inverse of patchify_batch: (B, m*n, h*d) -> (B, H, D)."""
    t_idx, d_idx, real = _slot_index(spec)
    out = np.zeros((patches.shape[0], spec.H, spec.D), dtype=patches.dtype)
    out[:, t_idx[real], d_idx[real]] = patches[:, real]
    return out


def unpatchify_batch_grad(grad_values: np.ndarray, spec: PatchSpec) -> np.ndarray:
    """Backprop of unpatchify_batch: route (B, H, D) grads to real patch slots."""
    t_idx, d_idx, real = _slot_index(spec)
    grad = np.zeros((grad_values.shape[0], spec.n_patches, spec.patch_width), dtype=grad_values.dtype)
    grad[:, real] = grad_values[:, t_idx[real], d_idx[real]]
    return grad


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def per_dim_spec(H: int, D: int, m: int = 1) -> PatchSpec:
    """One dimension group per action dim (d=1); m temporal groups."""
    if H % m != 0:
        raise ValueError(f"m={m} must divide H={H}")
    return PatchSpec(m=m, h=H // m, groups=tuple((j,) for j in range(D)), H=H, D=D)


def grouped_spec(H: int, D: int, groups: tuple[tuple[int, ...], ...], m: int = 1) -> PatchSpec:
    if H % m != 0:
        raise ValueError(f"m={m} must divide H={H}")
    return PatchSpec(m=m, h=H // m, groups=groups, H=H, D=D)


_ARM7 = ((0, 1, 2), (3, 4, 5), (6,))  # eef position / orientation / gripper


def preset_spec(name: str, H: int, D: int) -> PatchSpec:
    """Named group-map presets for common embodiments.

    per-dim: singleton groups (any D); 7dof: pos/rot/grip; 14dof: per-arm
    pos/rot/grip; 21dof: two arms plus torso, base, and an auxiliary dim.
    """
    if name == "per-dim":
        return per_dim_spec(H, D)
    if name == "7dof":
        if D != 7:
            raise ValueError(f"7dof preset needs D=7, got {D}")
        return grouped_spec(H, D, _ARM7)
    if name == "14dof":
        if D != 14:
            raise ValueError(f"14dof preset needs D=14, got {D}")
        arm2 = tuple(tuple(i + 7 for i in g) for g in _ARM7)
        return grouped_spec(H, D, _ARM7 + arm2, m=2 if H % 2 == 0 else 1)
    if name == "21dof":
        if D != 21:
            raise ValueError(f"21dof preset needs D=21, got {D}")
        arm2 = tuple(tuple(i + 7 for i in g) for g in _ARM7)
        extra = ((14, 15, 16), (17, 18, 19), (20,))  # torso / base / aux
        return grouped_spec(H, D, _ARM7 + arm2 + extra, m=2 if H % 2 == 0 else 1)
    raise ValueError(f"unknown patch preset {name!r}")
