"""HTTP service exposing frozen-codec inference.

Arrays travel as base64-encoded little-endian buffers with explicit dtype
and shape, so clients in any language get bit-exact values. Loaded codecs
are immutable; concurrent requests against one handle are safe.
"""

from __future__ import annotations

import base64
import itertools

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from actcodec import __version__, bindings


class ArrayPayload(BaseModel):
    data_b64: str
    dtype: str = Field(description="numpy dtype string, little-endian (e.g. '<f4', '<i4')")
    shape: list[int]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ArrayPayload":
        dt = arr.dtype.newbyteorder("<")
        blob = np.ascontiguousarray(arr.astype(dt, copy=False)).tobytes()
        return cls(data_b64=base64.b64encode(blob).decode("ascii"), dtype=dt.str, shape=list(arr.shape))

    def to_array(self) -> np.ndarray:
        blob = base64.b64decode(self.data_b64)
        arr = np.frombuffer(blob, dtype=np.dtype(self.dtype))
        return arr.reshape(self.shape)


class LoadRequest(BaseModel):
    path: str


class CodecInfo(BaseModel):
    handle: str
    horizon: int
    dims: int
    n_stages: int
    c_h: int
    c_a: int
    codebook_size: int
    n_tokens: int


class EncodeRequest(BaseModel):
    chunks: ArrayPayload


class EncodeResponse(BaseModel):
    codes: ArrayPayload


class DecodeRequest(BaseModel):
    codes: ArrayPayload


class DecodeResponse(BaseModel):
    chunks: ArrayPayload


class VrrRequest(BaseModel):
    chunks: ArrayPayload
    sigma: float
    per_scalar: bool = False


class VrrResponse(BaseModel):
    sigma: float
    vrr: float


class HealthResponse(BaseModel):
    status: str
    version: str
    codecs: int


def create_app(preload: dict[str, str] | None = None) -> FastAPI:
    """Build the service; preload maps handle names to checkpoint paths."""
    app = FastAPI(title="actcodec", version=__version__)
    handles: dict[str, bindings.CodecHandle] = {}
    counter = itertools.count(len(preload or {}) + 1)

    def info(name: str, handle: bindings.CodecHandle) -> CodecInfo:
        cfg = handle.codec.config
        return CodecInfo(
            handle=name,
            horizon=handle.horizon,
            dims=handle.dims,
            n_stages=cfg.n_stages,
            c_h=cfg.model.c_h,
            c_a=cfg.model.c_a,
            codebook_size=cfg.codebook_size,
            n_tokens=handle.n_tokens,
        )

    def get_handle(name: str) -> bindings.CodecHandle:
        if name not in handles:
            raise HTTPException(status_code=404, detail=f"no codec with handle {name!r}")
        return handles[name]

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__, codecs=len(handles))

    @app.post("/codecs", response_model=CodecInfo)
    def load_codec(req: LoadRequest):
        try:
            handle = bindings.load(req.path)
        except (OSError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        name = f"codec-{next(counter)}"
        handles[name] = handle
        return info(name, handle)

    @app.get("/codecs/{name}", response_model=CodecInfo)
    def codec_info(name: str):
        return info(name, get_handle(name))

    @app.post("/codecs/{name}/encode", response_model=EncodeResponse)
    def encode(name: str, req: EncodeRequest):
        """Chunks (B, H, D) -> code tensors (B, N_c, C_h, C_a)."""
        handle = get_handle(name)
        try:
            flat = bindings.encode(handle, req.chunks.to_array())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        codes = flat.reshape((-1,) + handle.code_shape)
        return EncodeResponse(codes=ArrayPayload.from_array(codes.astype(np.int32)))

    @app.post("/codecs/{name}/decode", response_model=DecodeResponse)
    def decode(name: str, req: DecodeRequest):
        """Code tensors (B, N_c, C_h, C_a) or flat (B, N) -> chunks (B, H, D)."""
        handle = get_handle(name)
        codes = req.codes.to_array().astype(np.int64)
        if codes.ndim == 4 and codes.shape[1:] == handle.code_shape:
            codes = codes.reshape(codes.shape[0], -1)
        try:
            values = bindings.decode(handle, codes)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return DecodeResponse(chunks=ArrayPayload.from_array(values.astype(np.float32)))

    @app.post("/codecs/{name}/vrr", response_model=VrrResponse)
    def vrr(name: str, req: VrrRequest):
        handle = get_handle(name)
        if req.sigma <= 0:
            raise HTTPException(status_code=422, detail="sigma must be positive")
        try:
            rate = bindings.vrr(handle, req.chunks.to_array(), req.sigma, req.per_scalar)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return VrrResponse(sigma=req.sigma, vrr=rate)

    if preload:
        for name, path in preload.items():
            handles[name] = bindings.load(path)
    return app
