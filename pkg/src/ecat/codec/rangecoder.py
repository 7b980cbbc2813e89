"""Byte-oriented range coder with 64-bit state and 16-bit frequency tables.

Carry-less design: the coder renormalizes a byte at a time, and when the
interval straddles a byte boundary with a narrow range it clamps the
range to the next 2^48 boundary instead of propagating carries.  Encoder
and decoder apply identical state updates, so the clamp never desyncs.

The hot loops are compiled with numba when available; a pure-Python
implementation with identical semantics is used otherwise (and for
differential testing).
"""

from __future__ import annotations

import numpy as np

__all__ = ["encode_slots", "decode_slots", "RangeCoderError", "HAVE_NUMBA"]

PRECISION = 16
TOTAL = 1 << PRECISION
_STATE_MASK = (1 << 64) - 1
_TOP = 1 << 56
_BOT = 1 << 48
_FLUSH_BYTES = 8


class RangeCoderError(ValueError):
    """Corrupt or truncated stream, or symbols outside the table alphabet."""


# -- pure-Python reference ---------------------------------------------------


def _py_encode(slots: np.ndarray, ctx: np.ndarray, cdf: np.ndarray) -> bytes:
    low = 0
    rng = _STATE_MASK
    out = bytearray()
    for i in range(slots.shape[0]):
        row = cdf[ctx[i]]
        s = slots[i]
        cl = int(row[s])
        ch = int(row[s + 1])
        r = rng // TOTAL
        low = low + cl * r
        rng = (ch - cl) * r
        while True:
            if (low ^ ((low + rng) & _STATE_MASK)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            out.append((low >> 56) & 0xFF)
            low = (low << 8) & _STATE_MASK
            rng = (rng << 8) & _STATE_MASK
    for _ in range(_FLUSH_BYTES):
        out.append((low >> 56) & 0xFF)
        low = (low << 8) & _STATE_MASK
    return bytes(out)


def _py_decode(data: bytes, ctx: np.ndarray, cdf: np.ndarray, lens: np.ndarray):
    n = ctx.shape[0]
    out = np.empty(n, dtype=np.int32)
    pos = 0
    size = len(data)
    if size < _FLUSH_BYTES:
        raise RangeCoderError("truncated stream (shorter than coder flush)")
    code = 0
    for _ in range(_FLUSH_BYTES):
        code = (code << 8) | data[pos]
        pos += 1
    low = 0
    rng = _STATE_MASK
    for i in range(n):
        row = cdf[ctx[i]]
        nsym = int(lens[ctx[i]]) - 1
        r = rng // TOTAL
        val = (code - low) // r
        if val >= TOTAL:
            val = TOTAL - 1
        lo_s, hi_s = 0, nsym
        while hi_s - lo_s > 1:
            mid = (lo_s + hi_s) >> 1
            if int(row[mid]) > val:
                hi_s = mid
            else:
                lo_s = mid
        s = lo_s
        cl = int(row[s])
        ch = int(row[s + 1])
        low = low + cl * r
        rng = (ch - cl) * r
        while True:
            if (low ^ ((low + rng) & _STATE_MASK)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            if pos >= size:
                raise RangeCoderError("truncated stream (decoder ran out of bytes)")
            code = ((code << 8) & _STATE_MASK) | data[pos]
            pos += 1
            low = (low << 8) & _STATE_MASK
            rng = (rng << 8) & _STATE_MASK
        out[i] = s
    # The flush is the encoder's final low; a synced decoder's code window
    # now holds exactly those bytes.  Catches wrong counts and most
    # corruption deterministically.
    if code != low:
        raise RangeCoderError("final coder state mismatch: wrong count or corrupt stream")
    return out, pos


# -- numba kernels ------------------------------------------------------------

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _nb_encode(slots, ctx, cdf, out):  # pragma: no cover - jitted
        mask = np.uint64(_STATE_MASK)
        top = np.uint64(_TOP)
        bot = np.uint64(_BOT)
        total = np.uint64(TOTAL)
        eight = np.uint64(8)
        f56 = np.uint64(56)
        low = np.uint64(0)
        rng = mask
        npos = 0
        cap = out.shape[0]
        for i in range(slots.shape[0]):
            row = ctx[i]
            s = slots[i]
            cl = np.uint64(cdf[row, s])
            ch = np.uint64(cdf[row, s + 1])
            r = rng // total
            low = (low + cl * r) & mask
            rng = (ch - cl) * r
            while True:
                if (low ^ ((low + rng) & mask)) < top:
                    pass
                elif rng < bot:
                    rng = (~low + np.uint64(1)) & (bot - np.uint64(1))
                else:
                    break
                if npos >= cap:
                    return -1
                out[npos] = np.uint8(low >> f56)
                npos += 1
                low = (low << eight) & mask
                rng = (rng << eight) & mask
        for _ in range(_FLUSH_BYTES):
            if npos >= cap:
                return -1
            out[npos] = np.uint8(low >> f56)
            npos += 1
            low = (low << eight) & mask
        return npos

    @njit(cache=True, nogil=True)
    def _nb_decode(data, ctx, cdf, lens, out):  # pragma: no cover - jitted
        mask = np.uint64(_STATE_MASK)
        top = np.uint64(_TOP)
        bot = np.uint64(_BOT)
        total = np.uint64(TOTAL)
        eight = np.uint64(8)
        size = data.shape[0]
        if size < _FLUSH_BYTES:
            return -1, 0
        code = np.uint64(0)
        pos = 0
        for _ in range(_FLUSH_BYTES):
            code = (code << eight) | np.uint64(data[pos])
            pos += 1
        low = np.uint64(0)
        rng = mask
        for i in range(ctx.shape[0]):
            row = ctx[i]
            nsym = lens[row] - 1
            r = rng // total
            val = (code - low) // r
            if val >= total:
                val = total - np.uint64(1)
            lo_s = 0
            hi_s = nsym
            while hi_s - lo_s > 1:
                mid = (lo_s + hi_s) >> 1
                if np.uint64(cdf[row, mid]) > val:
                    hi_s = mid
                else:
                    lo_s = mid
            s = lo_s
            cl = np.uint64(cdf[row, s])
            ch = np.uint64(cdf[row, s + 1])
            low = (low + cl * r) & mask
            rng = (ch - cl) * r
            while True:
                if (low ^ ((low + rng) & mask)) < top:
                    pass
                elif rng < bot:
                    rng = (~low + np.uint64(1)) & (bot - np.uint64(1))
                else:
                    break
                if pos >= size:
                    return -1, pos
                code = ((code << eight) & mask) | np.uint64(data[pos])
                pos += 1
                low = (low << eight) & mask
                rng = (rng << eight) & mask
            out[i] = s
        if code != low:
            return -2, pos
        return 0, pos


# -- public wrappers -----------------------------------------------------------


def _normalize_ctx(ctx, n: int, n_ctx: int) -> np.ndarray:
    if ctx is None:
        if n_ctx != 1:
            raise ValueError("ctx required when tables hold multiple contexts")
        return np.zeros(n, dtype=np.int32)
    ctx = np.ascontiguousarray(ctx, dtype=np.int32).reshape(-1)
    if ctx.shape[0] != n:
        raise ValueError("ctx length must match symbol count")
    if n and (ctx.min() < 0 or ctx.max() >= n_ctx):
        raise ValueError("ctx index out of table range")
    return ctx


def encode_slots(slots, cdf: np.ndarray, lens: np.ndarray, ctx=None) -> bytes:
    """Encode slot indices (already offset into each context's alphabet).

    Raises RangeCoderError when any slot falls outside its alphabet.
    """
    slots = np.ascontiguousarray(slots, dtype=np.int32).reshape(-1)
    n = slots.shape[0]
    if n == 0:
        return b""
    ctx = _normalize_ctx(ctx, n, cdf.shape[0])
    nslots = lens[ctx] - 1
    if (slots < 0).any() or (slots >= nslots).any():
        bad = int(np.argmax((slots < 0) | (slots >= nslots)))
        raise RangeCoderError(
            f"symbol {int(slots[bad])} at position {bad} outside alphabet of {int(nslots[bad])} slots"
        )
    if not HAVE_NUMBA:
        return _py_encode(slots, ctx, cdf)
    cap = 2 * n + 512
    while True:
        out = np.empty(cap, dtype=np.uint8)
        written = _nb_encode(slots, ctx, cdf, out)
        if written >= 0:
            return out[:written].tobytes()
        cap *= 4  # pathological clamp cascades; regrow and retry


def decode_slots(data: bytes, count: int, cdf: np.ndarray, lens: np.ndarray, ctx=None):
    """Decode ``count`` slot indices; returns (slots, consumed_bytes).

    The stream must be fully consumed: decoding with the wrong count or
    mismatched tables is detected (probabilistically for the latter).
    """
    if count == 0:
        if len(data) != 0:
            raise RangeCoderError("expected empty stream for zero symbols")
        return np.empty(0, dtype=np.int32), 0
    ctx = _normalize_ctx(ctx, count, cdf.shape[0])
    buf = np.frombuffer(data, dtype=np.uint8)
    if HAVE_NUMBA:
        out = np.empty(count, dtype=np.int32)
        status, consumed = _nb_decode(buf, ctx, cdf, lens, out)
        if status == -1:
            raise RangeCoderError("truncated stream (decoder ran out of bytes)")
        if status == -2:
            raise RangeCoderError("final coder state mismatch: wrong count or corrupt stream")
    else:
        out, consumed = _py_decode(bytes(data), ctx, cdf, lens)
    if consumed != len(data):
        raise RangeCoderError(
            f"stream not fully consumed ({consumed} of {len(data)} bytes): wrong count or tables"
        )
    return out, consumed
