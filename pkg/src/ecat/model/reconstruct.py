"""Feature aggregation and the synthesis transform back to RGB.

Aggregation fuses the embedded latent with the first three transformer
block outputs: each of the four inputs goes through its own 1x1
convolution down to C/4 channels, the results are concatenated in fixed
order and fused by one more 1x1 convolution back to C.  There is no
activation anywhere in the aggregation, so it is linear in its inputs.

Synthesis is four stride-2 5x5 deconvolutions with LeakyReLU between
(none after the last); pixel clamping happens only at export so the
distortion gradient stays alive.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..config import ModelConfig
from ..nn import Module, functional as F
from ..nn.tensor import Tensor
from ..codec.encoder import LEAKY_SLOPE
from .layers import Conv, Deconv

__all__ = ["FeatureAggregation", "SynthesisTransform"]


class FeatureAggregation(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        c = cfg.embed_c
        self.branches = [
            self.child(f"reduce{i}", Conv(c, c // 4, kernel=1, stride=1, rng=rng))
            for i in range(4)
        ]
        self.fuse = self.child("fuse", Conv(c, c, kernel=1, stride=1, rng=rng))

    def __call__(self, features: Sequence[Tensor]) -> Tensor:
        """features = [embedded latent, block1, block2, block3] grids."""
        if len(features) != 4:
            raise ValueError("aggregation takes exactly four feature grids")
        shape = features[0].shape
        for f in features[1:]:
            if f.shape != shape:
                raise ValueError("aggregation inputs must share a shape")
        reduced = [conv(f) for conv, f in zip(self.branches, features)]
        return self.fuse(F.concat(reduced, axis=-1))


class SynthesisTransform(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        n = cfg.channels_n
        widths = [cfg.embed_c, n, n, n, 3]
        self.deconvs = [
            self.child(f"deconv{i}", Deconv(widths[i], widths[i + 1], kernel=5, stride=2, rng=rng))
            for i in range(4)
        ]

    def __call__(self, zf: Tensor) -> Tensor:
        h = zf
        for i, deconv in enumerate(self.deconvs):
            h = deconv(h)
            if i < 3:
                h = F.leaky_relu(h, LEAKY_SLOPE)
        return h
