"""The fixed operation set of the tape.

Every op returns a Tensor whose backward closure scatters the output
gradient to the inputs.  Convolutions use an im2col/col2im pair written
as 25 strided slice copies (kernel offsets), which keeps the hot path
inside BLAS.  deconv2d is the exact adjoint of conv2d for a shared
kernel, which the tests exploit.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy import special as _special

from .tensor import Tensor, as_tensor, contig

__all__ = [
    "add", "sub", "mul", "div", "matmul", "reshape", "transpose", "index",
    "concat", "sum", "mean", "exp", "log", "sqrt", "erf", "sigmoid",
    "softplus", "leaky_relu", "gelu", "lower_bound", "conv2d", "deconv2d",
    "layer_norm", "softmax", "log_softmax", "cross_entropy",
    "gaussian_bin_prob", "logistic_bin_prob", "pad_grid", "crop_grid",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)


def _sum_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return contig(g.reshape(shape))


# -- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out = a.data + b.data

    def backward(g):
        a.accumulate_grad(_sum_to_shape(g, a.data.shape))
        b.accumulate_grad(_sum_to_shape(g, b.data.shape))

    def backward_a(g):
        a.accumulate_grad(_sum_to_shape(g, a.data.shape))

    def backward_b(g):
        b.accumulate_grad(_sum_to_shape(g, b.data.shape))

    if a.requires_grad and b.requires_grad:
        return Tensor.result(out, (a, b), backward)
    if a.requires_grad:
        return Tensor.result(out, (a,), backward_a)
    return Tensor.result(out, (b,), backward_b)


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_sum_to_shape(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_sum_to_shape(-g, b.data.shape))

    return Tensor.result(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_sum_to_shape(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_sum_to_shape(g * a.data, b.data.shape))

    return Tensor.result(out, (a, b), backward)


def div(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    out = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_sum_to_shape(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_sum_to_shape(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor.result(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports stacked (>=2D) operands with broadcasting
    limited to leading batch axes."""
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_sum_to_shape(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_sum_to_shape(gb, b.data.shape))

    return Tensor.result(out, (a, b), backward)


# -- shape manipulation --------------------------------------------------


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = contig(a.data.reshape(shape))

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return Tensor.result(out, (a,), backward)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = contig(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate_grad(contig(g.transpose(inv)))

    return Tensor.result(out, (a,), backward)


def index(a: Tensor, idx) -> Tensor:
    """Basic (slice / integer) indexing.  Integer-array indexing is not on
    the tape; use it on detached data."""
    out = contig(a.data[idx])

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g.reshape(full[idx].shape)
        a.accumulate_grad(full)

    return Tensor.result(out, (a,), backward)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.accumulate_grad(contig(g[tuple(sl)]))

    return Tensor.result(out, tuple(parts), backward)


def pad_grid(a: Tensor, pad: int) -> Tensor:
    """Zero-pad the two spatial axes of a [..., H, W, C] tensor."""
    width = [(0, 0)] * a.ndim
    width[-3] = (pad, pad)
    width[-2] = (pad, pad)
    out = np.pad(a.data, width)
    sl = tuple(
        slice(pad, -pad) if i in (a.ndim - 3, a.ndim - 2) else slice(None)
        for i in range(a.ndim)
    )

    def backward(g):
        a.accumulate_grad(contig(g[sl]))

    return Tensor.result(out, (a,), backward)


def crop_grid(a: Tensor, h: int, w: int) -> Tensor:
    """Crop the two spatial axes of a [..., H, W, C] tensor to (h, w)."""
    sl = (Ellipsis, slice(0, h), slice(0, w), slice(None))
    out = contig(a.data[sl])

    def backward(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        a.accumulate_grad(full)

    return Tensor.result(out, (a,), backward)


# -- reductions ----------------------------------------------------------


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())
        else:
            g2 = g if keepdims else np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(g2, a.data.shape).copy())

    return Tensor.result(out, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


# -- elementwise nonlinearities -------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        a.accumulate_grad(g * out)

    return Tensor.result(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def backward(g):
        a.accumulate_grad(g / a.data)

    return Tensor.result(out, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward(g):
        a.accumulate_grad(g * (0.5 / out))

    return Tensor.result(out, (a,), backward)


def erf(a: Tensor) -> Tensor:
    out = _special.erf(a.data)

    def backward(g):
        a.accumulate_grad(g * (_TWO_OVER_SQRTPI * np.exp(-a.data * a.data)))

    return Tensor.result(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)

    def backward(g):
        a.accumulate_grad(g * (out * (1.0 - out)))

    return Tensor.result(out, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a: Tensor) -> Tensor:
    out = _softplus(a.data)

    def backward(g):
        a.accumulate_grad(g * _sigmoid(a.data))

    return Tensor.result(out, (a,), backward)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError("leaky_relu slope must be in (0, 1)")
    out = np.where(a.data >= 0.0, a.data, a.data * slope)

    def backward(g):
        a.accumulate_grad(np.where(a.data >= 0.0, g, g * slope))

    return Tensor.result(out, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + _special.erf(x * _INV_SQRT2))
    out = x * cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        a.accumulate_grad(g * (cdf + x * pdf))

    return Tensor.result(out, (a,), backward)


def lower_bound(a: Tensor, bound: float) -> Tensor:
    """max(a, bound) with zero gradient in the clamped region."""
    clamped = a.data < bound
    out = np.where(clamped, bound, a.data)

    def backward(g):
        a.accumulate_grad(np.where(clamped, 0.0, g))

    return Tensor.result(out, (a,), backward)


# -- convolution ----------------------------------------------------------


def _conv_out_extent(h: int, k: int, stride: int, pad: int) -> int:
    return (h + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, _, _, c = xp.shape
    cols = np.empty((b, ho, wo, k, k, c), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[
                :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride, :
            ]
    return cols


def _col2im(gcols: np.ndarray, hp: int, wp: int, k: int, stride: int) -> np.ndarray:
    b, ho, wo, _, _, c = gcols.shape
    gx = np.zeros((b, hp, wp, c), dtype=gcols.dtype)
    for i in range(k):
        for j in range(k):
            gx[:, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride, :] += gcols[
                :, :, :, i, j, :
            ]
    return gx


def _spatial(x: Tensor):
    """Accept [H,W,C] or [B,H,W,C]; return (4D array, had_batch)."""
    if x.ndim == 3:
        return x.data[None], False
    if x.ndim == 4:
        return x.data, True
    raise ValueError(f"expected 3D or 4D spatial tensor, got shape {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor], stride: int, padding: int) -> Tensor:
    """Cross-correlation with kernel w[kh, kw, Cin, Cout] on channels-last x.

    When stride > 1 the padded extent must tile exactly: every input pixel
    participates in some window (this is what makes deconv2d the exact
    adjoint, and what the stride-2 "halve exactly" contract means).
    """
    xd, batched = _spatial(x)
    kh, kw, cin, cout = w.data.shape
    if kh != kw:
        raise ValueError("square kernels only")
    if xd.shape[-1] != cin:
        raise ValueError(f"conv2d channel mismatch: input {xd.shape[-1]}, kernel {cin}")
    bsz, h, wdt, _ = xd.shape
    ho = _conv_out_extent(h, kh, stride, padding)
    wo = _conv_out_extent(wdt, kh, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError("conv2d output would be empty")
    # Full coverage: the last window must reach the end of the padded input.
    if stride > 1:
        for ext, out in ((h, ho), (wdt, wo)):
            if stride * (out - 1) + kh < ext + padding:
                raise ValueError(
                    f"conv2d stride {stride} does not tile extent {ext} (kernel {kh}, padding {padding})"
                )

    xp = np.pad(xd, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else xd
    cols = _im2col(xp, kh, stride, ho, wo)
    flat = cols.reshape(bsz * ho * wo, kh * kw * cin)
    y = flat @ w.data.reshape(kh * kw * cin, cout)
    if b is not None:
        y += b.data
    y = y.reshape(bsz, ho, wo, cout)

    def backward(g):
        g4 = g if batched else g[None]
        gflat = g4.reshape(bsz * ho * wo, cout)
        if b is not None and b.requires_grad:
            b.accumulate_grad(gflat.sum(axis=0))
        if w.requires_grad:
            gw = flat.T @ gflat
            w.accumulate_grad(gw.reshape(w.data.shape))
        if x.requires_grad:
            gcols = (gflat @ w.data.reshape(kh * kw * cin, cout).T).reshape(
                bsz, ho, wo, kh, kw, cin
            )
            gxp = _col2im(gcols, xp.shape[1], xp.shape[2], kh, stride)
            if padding:
                gxp = gxp[:, padding:-padding, padding:-padding, :]
            x.accumulate_grad(contig(gxp if batched else gxp[0]))

    parents = (x, w) if b is None else (x, w, b)
    out = y if batched else y[0]
    return Tensor.result(contig(out), parents, backward)


def deconv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor],
    stride: int,
    padding: int,
    output_padding: int = 0,
) -> Tensor:
    """Transposed convolution; the adjoint of conv2d for the same kernel.

    Kernel layout matches conv2d: w[kh, kw, Cout, Cin] where Cin is the
    input channel count here (conv2d's output side).
    """
    xd, batched = _spatial(x)
    kh, kw, cout, cin = w.data.shape
    if xd.shape[-1] != cin:
        raise ValueError(f"deconv2d channel mismatch: input {xd.shape[-1]}, kernel {cin}")
    if output_padding >= stride:
        raise ValueError("output_padding must be < stride")
    bsz, h, wdt, _ = xd.shape
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (wdt - 1) * stride - 2 * padding + kh + output_padding
    if ho < 1 or wo < 1:
        raise ValueError("deconv2d output would be empty")

    hp = (h - 1) * stride + kh + output_padding
    wp = (wdt - 1) * stride + kh + output_padding
    flat = xd.reshape(bsz * h * wdt, cin)
    cols = (flat @ w.data.reshape(kh * kw * cout, cin).T).reshape(bsz, h, wdt, kh, kw, cout)
    canvas = _col2im(cols, hp, wp, kh, stride)
    y = canvas[:, padding : padding + ho, padding : padding + wo, :]
    if b is not None:
        y = y + b.data
    else:
        y = contig(y)

    def backward(g):
        g4 = g if batched else g[None]
        if b is not None and b.requires_grad:
            b.accumulate_grad(g4.sum(axis=(0, 1, 2)))
        gcanvas = np.zeros((bsz, hp, wp, cout), dtype=g4.dtype)
        gcanvas[:, padding : padding + ho, padding : padding + wo, :] = g4
        gcols = _im2col(gcanvas, kh, stride, h, wdt)
        gcols_flat = gcols.reshape(bsz * h * wdt, kh * kw * cout)
        if w.requires_grad:
            gw = gcols_flat.T @ flat
            w.accumulate_grad(gw.reshape(w.data.shape))
        if x.requires_grad:
            gx = (gcols_flat @ w.data.reshape(kh * kw * cout, cin)).reshape(xd.shape)
            x.accumulate_grad(contig(gx if batched else gx[0]))

    parents = (x, w) if b is None else (x, w, b)
    out = y if batched else y[0]
    return Tensor.result(contig(out), parents, backward)


# -- normalization / attention pieces --------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then affine."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out = xn * gamma.data + beta.data

    def backward(g):
        n = xd.shape[-1]
        if beta.requires_grad:
            beta.accumulate_grad(_sum_to_shape(g, beta.data.shape))
        if gamma.requires_grad:
            gamma.accumulate_grad(_sum_to_shape(g * xn, gamma.data.shape))
        if x.requires_grad:
            gy = g * gamma.data
            gsum = gy.sum(axis=-1, keepdims=True)
            gdot = (gy * xn).sum(axis=-1, keepdims=True)
            gx = inv * (gy - gsum / n - xn * gdot / n)
            x.accumulate_grad(gx.astype(xd.dtype, copy=False))

    return Tensor.result(out, (x, gamma, beta), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        x.accumulate_grad(out * (g - dot))

    return Tensor.result(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        sm = np.exp(out)
        x.accumulate_grad(g - sm * g.sum(axis=axis, keepdims=True))

    return Tensor.result(out, (x,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean natural-log cross-entropy of integer labels over the batch."""
    if logits.ndim != 2:
        raise ValueError("cross_entropy expects [batch, classes] logits")
    n = logits.shape[0]
    ls = log_softmax(logits, axis=-1)
    picked = ls.data[np.arange(n), labels]
    out = np.asarray(-picked.sum() / n, dtype=logits.dtype)

    def backward(g):
        gl = np.zeros_like(ls.data)
        gl[np.arange(n), labels] = -float(g) / n
        ls.accumulate_grad(gl)

    return Tensor.result(out, (ls,), backward)


# -- interval probabilities for entropy models ------------------------------


def _norm_cdf(t: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + _special.erf(t * _INV_SQRT2))


def gaussian_bin_prob(delta: Tensor, sigma: Tensor) -> Tensor:
    """P(value lands in its unit-width bin) under N(mu, sigma); delta = v - mu.

    Evaluated on the tail side of the distribution so the CDF difference
    does not cancel catastrophically for |delta| >> sigma.
    """
    d = np.abs(delta.data)
    hi = (-d + 0.5) / sigma.data
    lo = (-d - 0.5) / sigma.data
    out = _norm_cdf(hi) - _norm_cdf(lo)

    def backward(g):
        phi_hi = _INV_SQRT2PI * np.exp(-0.5 * hi * hi)
        phi_lo = _INV_SQRT2PI * np.exp(-0.5 * lo * lo)
        sgn = np.where(delta.data >= 0.0, 1.0, -1.0)
        if delta.requires_grad:
            # d|delta| = sgn; dp/d|d| = (-phi_hi + phi_lo)/sigma
            delta.accumulate_grad(_sum_to_shape(g * sgn * (phi_lo - phi_hi) / sigma.data, delta.data.shape))
        if sigma.requires_grad:
            gs = (-phi_hi * hi + phi_lo * lo) / sigma.data
            sigma.accumulate_grad(_sum_to_shape(g * gs, sigma.data.shape))

    return Tensor.result(out, (delta, sigma), backward)


def logistic_bin_prob(delta: Tensor, scale: Tensor) -> Tensor:
    """P(value in its unit bin) under a logistic(loc, scale); delta = v - loc."""
    d = np.abs(delta.data)
    hi = (-d + 0.5) / scale.data
    lo = (-d - 0.5) / scale.data
    shi = _sigmoid(hi)
    slo = _sigmoid(lo)
    out = shi - slo

    def backward(g):
        dhi = shi * (1.0 - shi)
        dlo = slo * (1.0 - slo)
        sgn = np.where(delta.data >= 0.0, 1.0, -1.0)
        if delta.requires_grad:
            delta.accumulate_grad(_sum_to_shape(g * sgn * (dlo - dhi) / scale.data, delta.data.shape))
        if scale.requires_grad:
            gs = (-dhi * hi + dlo * lo) / scale.data
            scale.accumulate_grad(_sum_to_shape(g * gs, scale.data.shape))

    return Tensor.result(out, (delta, scale), backward)
