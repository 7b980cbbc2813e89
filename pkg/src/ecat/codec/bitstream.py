"""The coded container exchanged between encoder and decoder.

Layout (little-endian):

    magic   4 bytes  "ECAT"
    version u8       1
    digest  8 bytes  model-config fingerprint
    H, W    u16 x2   source image extents
    bounds  i16 x4   zmin, zmax, hmin, hmax (observed per-tensor)
    hlen    u32      hyper-segment byte count
    hyper   bytes    range-coded hyper-latent (factorized prior)
    main    bytes    range-coded main latent (conditional Gaussian)

The hyper segment decodes first from the learned factorized prior; the
recovered hyper-latent is run through the hyper-decoder to rebuild the
per-element (mu, sigma) tables for the main segment.  Nothing beyond the
model weights is needed to decode.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .rangecoder import RangeCoderError
from .tables import gaussian_tables, logistic_tables

__all__ = ["LatentPack", "BitstreamError", "serialize", "deserialize", "MAGIC", "VERSION"]

MAGIC = b"ECAT"
VERSION = 1
_HEADER = struct.Struct("<4sB8sHHhhhhI")


class BitstreamError(ValueError):
    """Container violates the format contract."""


@dataclass
class LatentPack:
    """Quantized latents plus their integer alphabet bounds."""

    latent: np.ndarray       # int32 [h, w, M]
    hyper: np.ndarray        # int32 [hh, hw, N]
    zmin: int
    zmax: int
    hmin: int
    hmax: int

    def __post_init__(self):
        self.latent = np.ascontiguousarray(self.latent, dtype=np.int32)
        self.hyper = np.ascontiguousarray(self.hyper, dtype=np.int32)
        for arr, lo, hi, what in (
            (self.latent, self.zmin, self.zmax, "latent"),
            (self.hyper, self.hmin, self.hmax, "hyper"),
        ):
            if lo > hi:
                raise BitstreamError(f"{what} bounds inverted: [{lo}, {hi}]")
            if arr.size and (arr.min() < lo or arr.max() > hi):
                raise BitstreamError(f"{what} symbols escape declared bounds [{lo}, {hi}]")

    @staticmethod
    def from_arrays(latent: np.ndarray, hyper: np.ndarray) -> "LatentPack":
        return LatentPack(
            latent=latent, hyper=hyper,
            zmin=int(latent.min()), zmax=int(latent.max()),
            hmin=int(hyper.min()), hmax=int(hyper.max()),
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LatentPack)
            and np.array_equal(self.latent, other.latent)
            and np.array_equal(self.hyper, other.hyper)
            and (self.zmin, self.zmax, self.hmin, self.hmax)
            == (other.zmin, other.zmax, other.hmin, other.hmax)
        )


def _channel_ctx(shape: tuple[int, int, int]) -> np.ndarray:
    hh, hw, n = shape
    return np.tile(np.arange(n, dtype=np.int32), hh * hw)


def serialize(pack: LatentPack, model) -> bytes:
    """Encode a pack against the model's entropy parameters."""
    cfg = model.cfg
    for lo, hi in ((pack.zmin, pack.zmax), (pack.hmin, pack.hmax)):
        if not (-(1 << 15) <= lo <= hi < (1 << 15)):
            raise BitstreamError("alphabet bounds exceed i16 header range")

    loc, scale = model.prior.arrays()
    hyper_tables = logistic_tables(loc, scale, pack.hmin, pack.hmax)
    hyper_bytes = hyper_tables.encode(pack.hyper.reshape(-1), ctx=_channel_ctx(pack.hyper.shape))

    mu, sigma = model.mu_sigma_arrays(pack.hyper)
    main_tables = gaussian_tables(mu.reshape(-1), sigma.reshape(-1), pack.zmin, pack.zmax)
    n_main = pack.latent.size
    main_bytes = main_tables.encode(
        pack.latent.reshape(-1), ctx=np.arange(n_main, dtype=np.int32)
    )

    h, w = cfg.input_hw
    header = _HEADER.pack(
        MAGIC, VERSION, cfg.digest(), h, w,
        pack.zmin, pack.zmax, pack.hmin, pack.hmax, len(hyper_bytes),
    )
    return header + hyper_bytes + main_bytes


def deserialize(data: bytes, model) -> LatentPack:
    """Decode a container back to the exact pack that produced it."""
    cfg = model.cfg
    if len(data) < _HEADER.size:
        raise BitstreamError("container shorter than its header")
    magic, version, digest, h, w, zmin, zmax, hmin, hmax, hlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported version {version}")
    if digest != cfg.digest():
        raise BitstreamError("model config digest mismatch")
    if (h, w) != cfg.input_hw:
        raise BitstreamError(f"stream extents {h}x{w} do not match model input {cfg.input_hw}")
    if zmin > zmax or hmin > hmax:
        raise BitstreamError("inverted alphabet bounds")

    body = data[_HEADER.size :]
    if hlen > len(body):
        raise BitstreamError("truncated hyper segment")
    hyper_seg, main_seg = body[:hlen], body[hlen:]

    lh, lw = cfg.latent_hw
    hh, hw_ = cfg.hyper_hw
    hyper_shape = (hh, hw_, cfg.channels_n)
    main_shape = (lh, lw, cfg.channels_m)

    loc, scale = model.prior.arrays()
    hyper_tables = logistic_tables(loc, scale, hmin, hmax)
    try:
        hyper_vals = hyper_tables.decode(
            hyper_seg, int(np.prod(hyper_shape)), ctx=_channel_ctx(hyper_shape)
        )
    except RangeCoderError as e:
        raise BitstreamError(f"hyper segment: {e}") from e
    hyper = hyper_vals.reshape(hyper_shape)

    mu, sigma = model.mu_sigma_arrays(hyper)
    main_tables = gaussian_tables(mu.reshape(-1), sigma.reshape(-1), zmin, zmax)
    n_main = int(np.prod(main_shape))
    try:
        main_vals = main_tables.decode(main_seg, n_main, ctx=np.arange(n_main, dtype=np.int32))
    except RangeCoderError as e:
        raise BitstreamError(f"main segment: {e}") from e

    return LatentPack(
        latent=main_vals.reshape(main_shape), hyper=hyper,
        zmin=zmin, zmax=zmax, hmin=hmin, hmax=hmax,
    )
