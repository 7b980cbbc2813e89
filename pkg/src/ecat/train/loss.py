"""The three-term training objective.

    total = alpha * CE + beta * MSE [+ rate]

CE is the mean natural-log cross-entropy over the batch.  MSE is summed
over pixels and channels per image in the 8-bit (0..255) pixel scale and
averaged over the batch, so beta trades directly against PSNR.  The rate
term is the model's total codelength per image in bits and is present
only in the "full" stage; pretraining bypasses quantization and the
hyper-prior entirely (the latent flows continuously).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..codec.encoder import quantize_noise
from ..model.network import CompressionClassifier, draw_quantizer_noise
from ..nn import functional as F
from ..nn.tensor import Tensor

__all__ = ["LossWeights", "LossParts", "joint_loss", "STAGE_PRETRAIN", "STAGE_FULL"]

STAGE_PRETRAIN = "pretrain"
STAGE_FULL = "full"


@dataclass(frozen=True)
class LossWeights:
    alpha: float
    beta: float
    stage: str = STAGE_FULL

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.stage not in (STAGE_PRETRAIN, STAGE_FULL):
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class LossParts:
    total: Tensor
    ce: float
    mse: float
    rate: float        # bits per image (0 in pretraining)
    batch_psnr: float  # diagnostic, from the unclamped MSE

    def scalars(self) -> dict[str, float]:
        return {
            "total": float(self.total.data),
            "ce": self.ce,
            "mse": self.mse,
            "rate": self.rate,
            "psnr": self.batch_psnr,
        }


def joint_loss(
    model: CompressionClassifier,
    x01: np.ndarray,
    labels: np.ndarray,
    weights: LossWeights,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[dict] = None,
) -> LossParts:
    """One differentiable evaluation of the objective on a batch.

    The quantizer noise is drawn from ``rng`` unless pre-drawn arrays are
    supplied (finite-difference checks need the stochastic path frozen).
    """
    x01 = np.asarray(x01, dtype=model.dtype)
    if x01.ndim != 4:
        raise ValueError("joint_loss expects a batched [B,H,W,3] input")
    labels = np.asarray(labels, dtype=np.int64)
    batch = x01.shape[0]

    z = model.analyze(x01)
    rate_t: Optional[Tensor] = None
    if weights.stage == STAGE_FULL:
        if noise is None:
            if rng is None:
                raise ValueError("full stage needs an rng or pre-drawn noise")
            noise = draw_quantizer_noise(model.cfg, batch, rng)
        z_tilde = z + Tensor(np.ascontiguousarray(noise["latent"], dtype=model.dtype))
        h = model.hyper_enc(z)
        h_tilde = h + Tensor(np.ascontiguousarray(noise["hyper"], dtype=model.dtype))
        _, _, rate_t = model.latent_rate_terms(z_tilde, h_tilde)
        zq = z_tilde
    else:
        zq = z

    logits, inters, z0 = model.transformer(zq)
    ce_t = F.cross_entropy(logits, labels)
    xhat01 = model.reconstruct_from(z0, inters)

    diff = (xhat01 - Tensor(x01)) * 255.0
    mse_t = F.sum(diff * diff) * (1.0 / batch)

    total = ce_t * weights.alpha + mse_t * weights.beta
    if rate_t is not None:
        total = total + rate_t * (1.0 / batch)

    ce = float(ce_t.data)
    mse = float(mse_t.data)
    rate = float(rate_t.data) / batch if rate_t is not None else 0.0
    for name, val in (("ce", ce), ("mse", mse), ("rate", rate), ("total", float(total.data))):
        if not math.isfinite(val) or val < -1e-6:
            raise FloatingPointError(
                f"loss component {name} is invalid ({val}); "
                f"ce={ce} mse={mse} rate={rate}"
            )

    n_px = float(np.prod(x01.shape[1:]))
    batch_psnr = 10.0 * math.log10(255.0**2 / max(mse / n_px, 1e-12))
    return LossParts(total=total, ce=ce, mse=mse, rate=rate, batch_psnr=batch_psnr)
