"""Transformer over quantized latents: embedding, pre-norm blocks, class head.

The latent grid is lifted to the embedding width with a 1x1 convolution,
flattened in raster (row-major) order, given learnable position
embeddings, and prepended with a learnable class token.  Each block is
pre-norm residual:

    x <- x + MSA(LN(x));  x <- x + FFN(LN(x))

The first three blocks' grid tokens are returned for the reconstructor;
the class token after the last block feeds the classifier head (its own
LayerNorm + linear; no extra full-sequence norm).
"""

from __future__ import annotations

import numpy as np

from ..config import ModelConfig
from ..nn import Module, functional as F
from ..nn.init import trunc_normal, zeros
from ..nn.tensor import Tensor
from .layers import Conv, LayerNorm, Linear

__all__ = ["Attention", "FeedForward", "Block", "TokenEmbedding", "TransformerHead"]

N_RECON_BLOCKS = 3  # blocks whose outputs feed feature aggregation


class Attention(Module):
    """Multi-head scaled dot-product self-attention."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.q = self.child("q", Linear(dim, dim, rng))
        self.k = self.child("k", Linear(dim, dim, rng))
        self.v = self.child("v", Linear(dim, dim, rng))
        self.out = self.child("out", Linear(dim, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        b, t, c = x.shape
        h, d = self.heads, self.head_dim

        def split(y: Tensor) -> Tensor:
            return F.transpose(F.reshape(y, (b, t, h, d)), (0, 2, 1, 3))

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = F.matmul(q, F.transpose(k, (0, 1, 3, 2))) * self.scale
        attn = F.softmax(scores, axis=-1)
        ctx = F.matmul(attn, v)
        merged = F.reshape(F.transpose(ctx, (0, 2, 1, 3)), (b, t, c))
        return self.out(merged)

    def attention_weights(self, x: Tensor) -> np.ndarray:
        """Softmax attention matrix [B, heads, T, T] (diagnostics only)."""
        b, t, c = x.shape
        h, d = self.heads, self.head_dim
        q = self.q(x).data.reshape(b, t, h, d).transpose(0, 2, 1, 3)
        k = self.k(x).data.reshape(b, t, h, d).transpose(0, 2, 1, 3)
        scores = (q @ k.transpose(0, 1, 3, 2)) * self.scale
        z = scores - scores.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)


class FeedForward(Module):
    def __init__(self, dim: int, ratio: float, rng: np.random.Generator):
        super().__init__()
        hidden = int(round(dim * ratio))
        self.fc1 = self.child("fc1", Linear(dim, hidden, rng))
        self.fc2 = self.child("fc2", Linear(hidden, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class Block(Module):
    def __init__(self, dim: int, heads: int, ratio: float, rng: np.random.Generator):
        super().__init__()
        self.ln1 = self.child("ln1", LayerNorm(dim))
        self.attn = self.child("attn", Attention(dim, heads, rng))
        self.ln2 = self.child("ln2", LayerNorm(dim))
        self.ffn = self.child("ffn", FeedForward(dim, ratio, rng))

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.ffn(self.ln2(x))


class TokenEmbedding(Module):
    """1x1 channel expansion, raster flatten, position + class embeddings."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        c = cfg.embed_c
        self.grid_hw = cfg.latent_hw
        self.expand = self.child("expand", Conv(cfg.channels_m, c, kernel=1, stride=1, rng=rng))
        self.pos = self.param("pos", trunc_normal((cfg.tokens, c), 0.02, rng))
        self.cls = self.param("cls", trunc_normal((1, c), 0.02, rng))

    def __call__(self, zq: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (sequence [B, T+1, C], pre-position grid feature [B, h, w, C])."""
        if zq.ndim == 3:
            zq = F.reshape(zq, (1,) + zq.shape)
        b, h, w, _ = zq.shape
        if (h, w) != self.grid_hw:
            raise ValueError(f"latent grid {h}x{w} does not match embedding {self.grid_hw}")
        z0 = self.expand(zq)
        flat = F.reshape(z0, (b, h * w, z0.shape[-1]))
        tokens = flat + self.pos
        cls = F.reshape(self.cls, (1, 1, z0.shape[-1]))
        cls_rows = cls + Tensor(np.zeros((b, 1, z0.shape[-1]), dtype=zq.dtype))
        seq = F.concat([cls_rows, tokens], axis=1)
        return seq, z0


class TransformerHead(Module):
    """Embedding + L blocks + classifier head over the class token."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.embed = self.child("embed", TokenEmbedding(cfg, rng))
        self.blocks = [
            self.child(f"block{i}", Block(cfg.embed_c, cfg.heads, cfg.ffn_ratio, rng))
            for i in range(cfg.depth_l)
        ]
        self.head_norm = self.child("head_norm", LayerNorm(cfg.embed_c))
        self.head = self.child("head", Linear(cfg.embed_c, cfg.num_classes, rng, std=0.02))

    def __call__(self, zq: Tensor, want_intermediates: bool = True):
        """Returns (logits [B,K], intermediates [3 x Tensor[B,h,w,C]], z0 [B,h,w,C])."""
        if want_intermediates and self.cfg.depth_l < N_RECON_BLOCKS:
            raise ValueError("reconstruction needs at least 3 transformer blocks")
        seq, z0 = self.embed(zq)
        b = seq.shape[0]
        h, w = self.embed.grid_hw
        c = self.cfg.embed_c
        intermediates = []
        for i, block in enumerate(self.blocks):
            seq = block(seq)
            if want_intermediates and i < N_RECON_BLOCKS:
                grid = F.reshape(seq[:, 1:, :], (b, h, w, c))
                intermediates.append(grid)
        cls_final = F.reshape(seq[:, 0, :], (b, c))
        logits = self.head(self.head_norm(cls_final))
        return logits, intermediates, z0

    def classify_logits(self, logits: Tensor) -> Tensor:
        return F.softmax(logits, axis=-1)
