"""Parameterized layer modules shared by the codec and transformer nets."""

from __future__ import annotations

import numpy as np

from ..nn import Module, functional as F
from ..nn.init import he_normal, trunc_normal, zeros
from ..nn.tensor import Tensor

__all__ = ["Conv", "Deconv", "Linear", "LayerNorm"]


class Conv(Module):
    """Strided 2D convolution, channels-last, same-style padding."""

    def __init__(self, cin: int, cout: int, kernel: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.stride = stride
        self.padding = (kernel - 1) // 2
        self.w = self.param("w", he_normal((kernel, kernel, cin, cout), kernel * kernel * cin, rng))
        self.b = self.param("b", zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class Deconv(Module):
    """Stride-s transposed convolution that exactly multiplies extent by s."""

    def __init__(self, cin: int, cout: int, kernel: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.stride = stride
        self.padding = (kernel - 1) // 2
        self.output_padding = stride - 1
        self.w = self.param("w", he_normal((kernel, kernel, cout, cin), kernel * kernel * cin, rng))
        self.b = self.param("b", zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return F.deconv2d(
            x, self.w, self.b,
            stride=self.stride, padding=self.padding, output_padding=self.output_padding,
        )


class Linear(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.w = self.param("w", trunc_normal((cin, cout), std, rng))
        self.b = self.param("b", zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return F.matmul(x, self.w) + self.b


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(dim, dtype=np.float32))
        self.beta = self.param("beta", zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, eps=self.eps)
