"""Hyper-prior networks and the likelihoods they parameterize.

The hyper-encoder summarizes the (pre-quantization) latent into a small
hyper-latent; the hyper-decoder maps the quantized hyper-latent to a
per-element conditional Gaussian (mu, sigma) for the main latent.  The
hyper-latent itself is coded under a learned per-channel logistic
(location, scale) factorized prior.

Odd intermediate extents (paper profile) are handled by the convolution
arithmetic on the way down (ceil division) and by cropping the mirrored
deconvolutions on the way up; the desk profile never hits the case.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import ModelConfig
from ..nn import Module, functional as F
from ..nn.tensor import Tensor
from .encoder import LEAKY_SLOPE

__all__ = [
    "HyperEncoder", "HyperDecoder", "FactorizedPrior",
    "gaussian_bin_likelihood", "factorized_bin_likelihood",
    "rate_bits", "rate_estimate", "SIGMA_MIN", "LIKELIHOOD_FLOOR",
]

SIGMA_MIN = 1e-6
LIKELIHOOD_FLOOR = 1e-9
_LN2 = math.log(2.0)


class HyperEncoder(Module):
    """conv3x3 s1 (N) + LReLU, conv5x5 s2 (N) + LReLU, conv5x5 s2 (N)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        from ..model.layers import Conv

        n, m = cfg.channels_n, cfg.channels_m
        self.c0 = self.child("conv0", Conv(m, n, kernel=3, stride=1, rng=rng))
        self.c1 = self.child("conv1", Conv(n, n, kernel=5, stride=2, rng=rng))
        self.c2 = self.child("conv2", Conv(n, n, kernel=5, stride=2, rng=rng))

    def __call__(self, z: Tensor) -> Tensor:
        h = F.leaky_relu(self.c0(z), LEAKY_SLOPE)
        h = F.leaky_relu(self.c1(h), LEAKY_SLOPE)
        return self.c2(h)


class HyperDecoder(Module):
    """Mirror of the hyper-encoder, ending in 2M channels split to (mu, sigma)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        from ..model.layers import Conv, Deconv

        n, m = cfg.channels_n, cfg.channels_m
        self.m = m
        self.latent_hw = cfg.latent_hw
        self.d0 = self.child("deconv0", Deconv(n, n, kernel=5, stride=2, rng=rng))
        self.d1 = self.child("deconv1", Deconv(n, n, kernel=5, stride=2, rng=rng))
        self.c2 = self.child("conv2", Conv(n, 2 * m, kernel=3, stride=1, rng=rng))

    def __call__(self, h: Tensor) -> tuple[Tensor, Tensor]:
        th, tw = self.latent_hw
        mid_h, mid_w = -(-th // 2), -(-tw // 2)
        y = F.leaky_relu(self.d0(h), LEAKY_SLOPE)
        if y.shape[-3] != mid_h or y.shape[-2] != mid_w:
            y = F.crop_grid(y, mid_h, mid_w)
        y = F.leaky_relu(self.d1(y), LEAKY_SLOPE)
        if y.shape[-3] != th or y.shape[-2] != tw:
            y = F.crop_grid(y, th, tw)
        y = self.c2(y)
        mu = y[..., : self.m]
        sigma = F.softplus(y[..., self.m :]) + SIGMA_MIN
        return mu, sigma


class FactorizedPrior(Module):
    """Per-channel logistic location/scale prior for the hyper-latent."""

    def __init__(self, channels: int):
        super().__init__()
        self.loc = self.param("loc", np.zeros(channels, dtype=np.float32))
        # softplus(0.5413) ~= 1.0, so scales start near 1.
        self.scale_raw = self.param(
            "scale_raw", np.full(channels, 0.5413, dtype=np.float32)
        )

    def scale(self) -> Tensor:
        return F.softplus(self.scale_raw) + SIGMA_MIN

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        loc = self.loc.data.astype(np.float64)
        raw = self.scale_raw.data.astype(np.float64)
        return loc, np.maximum(raw, 0) + np.log1p(np.exp(-np.abs(raw))) + SIGMA_MIN


def gaussian_bin_likelihood(v: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """P(v's unit bin) under N(mu, sigma), floored to keep -log finite."""
    return F.lower_bound(F.gaussian_bin_prob(v - mu, sigma), LIKELIHOOD_FLOOR)


def factorized_bin_likelihood(v: Tensor, loc: Tensor, scale: Tensor) -> Tensor:
    return F.lower_bound(F.logistic_bin_prob(v - loc, scale), LIKELIHOOD_FLOOR)


def rate_bits(*likelihoods: Tensor) -> Tensor:
    """Total codelength in bits implied by per-element bin likelihoods."""
    total = None
    for p in likelihoods:
        term = F.sum(F.log(p)) * (-1.0 / _LN2)
        total = term if total is None else total + term
    return total


# -- numpy path for coded packs ------------------------------------------------


def _norm_cdf(x):
    from scipy.special import erf

    return 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def gaussian_bin_prob_np(v: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    d = np.abs(v.astype(np.float64) - mu)
    p = _norm_cdf((-d + 0.5) / sigma) - _norm_cdf((-d - 0.5) / sigma)
    return np.maximum(p, LIKELIHOOD_FLOOR)


def logistic_bin_prob_np(v: np.ndarray, loc: np.ndarray, scale: np.ndarray) -> np.ndarray:
    from scipy.special import expit

    d = np.abs(v.astype(np.float64) - loc)
    p = expit((-d + 0.5) / scale) - expit((-d - 0.5) / scale)
    return np.maximum(p, LIKELIHOOD_FLOOR)


def rate_estimate(pack, mu: np.ndarray, sigma: np.ndarray, prior: FactorizedPrior) -> float:
    """Model codelength of a quantized pack, in bits (main + hyper)."""
    main_bits = -np.log2(gaussian_bin_prob_np(pack.latent, mu, sigma)).sum()
    loc, scale = prior.arrays()
    hyper_bits = -np.log2(logistic_bin_prob_np(pack.hyper, loc, scale)).sum()
    return float(main_bits + hyper_bits)
