"""Quantized cumulative-frequency tables for the range coder.

Each table set covers one integer alphabet [vmin..vmax] shared by all of
its contexts.  Frequencies are quantized to a total of 2^16 with every
in-range symbol kept at frequency >= 1 (so any bounded symbol remains
codable no matter how unlikely the model thinks it is).  Mass outside
the bounds is folded into the edge bins before quantization, mirroring
how the bounds are chosen (observed min/max).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as _special

from .rangecoder import TOTAL, RangeCoderError, decode_slots, encode_slots

__all__ = ["EntropyTables", "tables_from_pmf", "gaussian_tables", "logistic_tables"]

MAX_ALPHABET = 1 << 14  # sane guard; bounds are i16 in the container
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass
class EntropyTables:
    """cdf[c] holds cumulative counts [0, ..., 65536] for context c."""

    cdf: np.ndarray       # uint32 [n_ctx, n_slots + 1]
    vmin: int
    vmax: int

    def __post_init__(self):
        self.cdf = np.ascontiguousarray(self.cdf, dtype=np.uint32)
        n_slots = self.vmax - self.vmin + 1
        if n_slots < 1:
            raise ValueError("empty alphabet")
        if self.cdf.ndim != 2 or self.cdf.shape[1] != n_slots + 1:
            raise ValueError("cdf width does not match alphabet bounds")
        if (self.cdf[:, 0] != 0).any() or (self.cdf[:, -1] != TOTAL).any():
            raise ValueError("cdf rows must run from 0 to 65536")
        if (np.diff(self.cdf.astype(np.int64), axis=1) < 1).any():
            raise ValueError("cdf rows must be strictly increasing (freq >= 1)")
        self._lens = np.full(self.cdf.shape[0], self.cdf.shape[1], dtype=np.int32)

    @property
    def n_contexts(self) -> int:
        return self.cdf.shape[0]

    @property
    def n_slots(self) -> int:
        return self.cdf.shape[1] - 1

    def encode(self, values, ctx=None) -> bytes:
        values = np.asarray(values).reshape(-1)
        if values.size and (values.min() < self.vmin or values.max() > self.vmax):
            raise RangeCoderError(
                f"value outside alphabet [{self.vmin}, {self.vmax}]"
            )
        slots = (values - self.vmin).astype(np.int32)
        return encode_slots(slots, self.cdf, self._lens, ctx=ctx)

    def decode(self, data: bytes, count: int, ctx=None) -> np.ndarray:
        slots, _ = decode_slots(data, count, self.cdf, self._lens, ctx=ctx)
        return slots.astype(np.int32) + self.vmin

    def code_bits(self, values, ctx=None) -> float:
        """Ideal codelength under the quantized tables, in bits."""
        values = np.asarray(values).reshape(-1)
        if values.size == 0:
            return 0.0
        ctx = np.zeros(values.size, dtype=np.int64) if ctx is None else np.asarray(ctx).reshape(-1)
        slots = values - self.vmin
        freq = (self.cdf[ctx, slots + 1].astype(np.int64) - self.cdf[ctx, slots].astype(np.int64))
        return float(-np.log2(freq / TOTAL).sum())


def _quantize_rows(p: np.ndarray) -> np.ndarray:
    """Quantize probability rows to integer frequencies summing to 2^16.

    Every slot gets a baseline count of 1; the remaining budget is
    apportioned by floor + largest fractional remainder (stable ties), so
    the result is deterministic and exact: p=[0.5, 0.5] -> [32768, 32768].
    """
    n_ctx, k = p.shape
    if k > MAX_ALPHABET:
        raise ValueError(f"alphabet of {k} symbols exceeds limit {MAX_ALPHABET}")
    if k > TOTAL // 2:
        raise ValueError("alphabet too large for 16-bit frequencies")
    p = p / p.sum(axis=1, keepdims=True)
    budget = TOTAL - k
    target = p * budget
    base = np.floor(target).astype(np.int64)
    freq = base + 1
    left = TOTAL - freq.sum(axis=1)
    # left >= 0 because sum(base) <= budget.
    rem = target - base
    order = np.argsort(-rem, axis=1, kind="stable")
    take = np.arange(k)[None, :] < left[:, None]
    bump = np.zeros_like(freq)
    np.put_along_axis(bump, order, take.astype(np.int64), axis=1)
    freq += bump
    return freq


def _tables_from_probs(p: np.ndarray, vmin: int, vmax: int) -> EntropyTables:
    freq = _quantize_rows(np.asarray(p, dtype=np.float64))
    cdf = np.zeros((freq.shape[0], freq.shape[1] + 1), dtype=np.uint32)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    return EntropyTables(cdf=cdf, vmin=int(vmin), vmax=int(vmax))


def tables_from_pmf(p, vmin: int = 0) -> EntropyTables:
    """Build tables from explicit per-context probability rows."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if (p < 0).any():
        raise ValueError("probabilities must be nonnegative")
    return _tables_from_probs(p, vmin, vmin + p.shape[1] - 1)


def _norm_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + _special.erf(x * _INV_SQRT2))


def _expit(x: np.ndarray) -> np.ndarray:
    return _special.expit(x)


def gaussian_tables(mu, sigma, vmin: int, vmax: int) -> EntropyTables:
    """One context per (mu, sigma) pair over unit bins of [vmin..vmax]."""
    mu = np.asarray(mu, dtype=np.float64).reshape(-1, 1)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1, 1)
    edges = np.arange(vmin, vmax + 2, dtype=np.float64) - 0.5
    cdf = _norm_cdf((edges[None, :] - mu) / sigma)
    p = np.diff(cdf, axis=1)
    p[:, 0] += cdf[:, 0]          # left tail folds into the lowest bin
    p[:, -1] += 1.0 - cdf[:, -1]  # right tail into the highest bin
    return _tables_from_probs(np.maximum(p, 0.0), vmin, vmax)


def logistic_tables(loc, scale, vmin: int, vmax: int) -> EntropyTables:
    """One context per (loc, scale) logistic over unit bins of [vmin..vmax]."""
    loc = np.asarray(loc, dtype=np.float64).reshape(-1, 1)
    scale = np.asarray(scale, dtype=np.float64).reshape(-1, 1)
    edges = np.arange(vmin, vmax + 2, dtype=np.float64) - 0.5
    cdf = _expit((edges[None, :] - loc) / scale)
    p = np.diff(cdf, axis=1)
    p[:, 0] += cdf[:, 0]
    p[:, -1] += 1.0 - cdf[:, -1]
    return _tables_from_probs(np.maximum(p, 0.0), vmin, vmax)
