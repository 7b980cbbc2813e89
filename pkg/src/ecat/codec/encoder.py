"""Analysis transform and the two quantizer modes.

Four stride-2 5x5 convolutions take an RGB image down 16x spatially into
an M-channel latent.  The last layer has no activation: the latent must
stay signed and unbounded for the entropy model.

Quantization is additive uniform noise during training (the gradient
passes through unchanged) and round-half-away-from-zero for coding.
"""

from __future__ import annotations

import numpy as np

from ..config import ModelConfig
from ..nn import Module, functional as F
from ..nn.tensor import Tensor

__all__ = ["AnalysisTransform", "LEAKY_SLOPE", "quantize_noise", "quantize_round"]

# 0.2 rather than the 0.01 default: the synthesis stack optimizes far
# faster when negative pre-activations keep a usable gradient.
LEAKY_SLOPE = 0.2


class AnalysisTransform(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        from ..model.layers import Conv

        self.input_hw = cfg.input_hw
        n, m = cfg.channels_n, cfg.channels_m
        widths = [3, n, n, n, m]
        self.convs = [
            self.child(f"conv{i}", Conv(widths[i], widths[i + 1], kernel=5, stride=2, rng=rng))
            for i in range(4)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        hw = (x.shape[-3], x.shape[-2])
        if hw != self.input_hw or x.shape[-1] != 3:
            raise ValueError(
                f"analysis transform configured for {self.input_hw} RGB input, got {x.shape}"
            )
        h = x
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if i < 3:
                h = F.leaky_relu(h, LEAKY_SLOPE)
        return h


def quantize_noise(z: Tensor, rng: np.random.Generator) -> Tensor:
    """Training relaxation: z + u with u ~ U(-1/2, 1/2) i.i.d. per element."""
    u = rng.uniform(-0.5, 0.5, size=z.shape).astype(z.dtype)
    return z + Tensor(u)


def quantize_round(z: np.ndarray) -> np.ndarray:
    """Round half away from zero, elementwise, to int32."""
    z = np.asarray(z)
    return (np.sign(z) * np.floor(np.abs(z) + 0.5)).astype(np.int32)
