"""The full compression/classification network and its coding entry points.

Training uses the differentiable paths (continuous or noise-quantized
latents); coding uses rounded latents, real range coding, and the exact
same hyper networks to rebuild (mu, sigma) on both sides.  The decoder
side of the API consumes only bitstream bytes: classification and
reconstruction take no image argument anywhere.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from ..codec.bitstream import LatentPack, deserialize, serialize
from ..codec.encoder import AnalysisTransform, quantize_noise, quantize_round
from ..codec.hyperprior import (
    FactorizedPrior,
    HyperDecoder,
    HyperEncoder,
    factorized_bin_likelihood,
    gaussian_bin_likelihood,
    rate_bits,
)
from ..config import ModelConfig
from ..nn import Module, functional as F, no_grad
from ..nn.tensor import Tensor
from .reconstruct import FeatureAggregation, SynthesisTransform
from .transformer import TransformerHead

__all__ = ["CompressionClassifier", "draw_quantizer_noise"]


def draw_quantizer_noise(cfg: ModelConfig, batch: int, rng: np.random.Generator) -> dict:
    """U(-1/2, 1/2) noise for both latents, drawn once per step."""
    lh, lw = cfg.latent_hw
    hh, hw = cfg.hyper_hw
    return {
        "latent": rng.uniform(-0.5, 0.5, size=(batch, lh, lw, cfg.channels_m)),
        "hyper": rng.uniform(-0.5, 0.5, size=(batch, hh, hw, cfg.channels_n)),
    }


class CompressionClassifier(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xEC47]))
        self.analysis = self.child("analysis", AnalysisTransform(cfg, rng))
        self.hyper_enc = self.child("hyper_enc", HyperEncoder(cfg, rng))
        self.hyper_dec = self.child("hyper_dec", HyperDecoder(cfg, rng))
        self.prior = self.child("prior", FactorizedPrior(cfg.channels_n))
        self.transformer = self.child("transformer", TransformerHead(cfg, rng))
        self.aggregate = self.child("aggregate", FeatureAggregation(cfg, rng))
        self.synthesis = self.child("synthesis", SynthesisTransform(cfg, rng))
        # Dataset normalization; overwritten from the training split stats.
        self.buffer("norm_mean", np.full(3, 0.5, dtype=np.float32))
        self.buffer("norm_std", np.full(3, 0.25, dtype=np.float32))

    # -- dtype / normalization ------------------------------------------------

    @property
    def dtype(self):
        return self.prior.loc.data.dtype

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        if np.any(np.asarray(std) <= 0):
            raise ValueError("normalization std must be positive")
        self.set_buffer("norm_mean", mean)
        self.set_buffer("norm_std", std)

    def normalize(self, x01: np.ndarray) -> Tensor:
        xn = (np.asarray(x01, dtype=self.dtype) - self.get_buffer("norm_mean")) / self.get_buffer(
            "norm_std"
        )
        return Tensor(np.ascontiguousarray(xn))

    def denormalize(self, xn: Tensor) -> Tensor:
        mean = Tensor(self.get_buffer("norm_mean"))
        std = Tensor(self.get_buffer("norm_std"))
        return xn * std + mean

    # -- differentiable paths ---------------------------------------------------

    def analyze(self, x01: np.ndarray) -> Tensor:
        """Image in [0,1] -> continuous latent."""
        return self.analysis(self.normalize(x01))

    def latent_rate_terms(self, z_tilde: Tensor, h_tilde: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """(mu, sigma, rate-bits Tensor) for noise-quantized latents."""
        mu, sigma = self.hyper_dec(h_tilde)
        p_main = gaussian_bin_likelihood(z_tilde, mu, sigma)
        p_hyper = factorized_bin_likelihood(h_tilde, self.prior.loc, self.prior.scale())
        return mu, sigma, rate_bits(p_main, p_hyper)

    def reconstruct_from(
        self, z0: Tensor, intermediates: Sequence[Tensor], keep: Optional[Iterable[int]] = None
    ) -> Tensor:
        """Aggregate features and synthesize an RGB image in [0,1] (unclamped).

        ``keep`` selects which of the three transformer features stay live
        (1-based); dropped ones are zeroed, mirroring the ablation protocol.
        """
        feats = [z0]
        keep_set = {1, 2, 3} if keep is None else set(keep)
        for i, f in enumerate(intermediates, start=1):
            if i in keep_set:
                feats.append(f)
            else:
                feats.append(Tensor(np.zeros_like(f.data)))
        fused = self.aggregate(feats)
        return self.denormalize(self.synthesis(fused))

    # -- coding paths (numpy in/out) ---------------------------------------------

    def _require_image(self, x01: np.ndarray) -> np.ndarray:
        x01 = np.asarray(x01, dtype=np.float32)
        if x01.shape != (*self.cfg.input_hw, 3):
            raise ValueError(f"expected image of shape {(*self.cfg.input_hw, 3)}, got {x01.shape}")
        return x01

    def make_pack(self, x01: np.ndarray) -> LatentPack:
        """Analyze, hyper-encode and round one image into a codable pack."""
        x01 = self._require_image(x01)
        with no_grad():
            z = self.analyze(x01[None])
            h = self.hyper_enc(z)
        return LatentPack.from_arrays(
            quantize_round(z.data[0]), quantize_round(h.data[0])
        )

    def mu_sigma_arrays(self, hyper_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Conditional Gaussian parameters from a quantized hyper-latent."""
        with no_grad():
            mu, sigma = self.hyper_dec(Tensor(hyper_hat.astype(self.dtype)[None]))
        return mu.data[0], sigma.data[0]

    def compress(self, x01: np.ndarray) -> bytes:
        return serialize(self.make_pack(x01), self)

    def decode_pack(self, data: bytes) -> LatentPack:
        return deserialize(data, self)

    def classify_pack(self, pack: LatentPack) -> np.ndarray:
        """Class probabilities straight from the quantized latent."""
        with no_grad():
            logits, _, _ = self.transformer(
                Tensor(pack.latent.astype(self.dtype)[None]), want_intermediates=False
            )
            probs = F.softmax(logits, axis=-1)
        return probs.data[0]

    def classify_bits(self, data: bytes) -> np.ndarray:
        """The compressed-inference path: bitstream bytes -> probabilities."""
        return self.classify_pack(self.decode_pack(data))

    def reconstruct_pack(
        self, pack: LatentPack, keep: Optional[Iterable[int]] = None
    ) -> np.ndarray:
        """Quantized latent -> RGB image in [0,1] (unclamped float)."""
        with no_grad():
            _, inters, z0 = self.transformer(Tensor(pack.latent.astype(self.dtype)[None]))
            xhat = self.reconstruct_from(z0, inters, keep=keep)
        return xhat.data[0]

    def decompress(self, data: bytes, keep: Optional[Iterable[int]] = None) -> np.ndarray:
        return self.reconstruct_pack(self.decode_pack(data), keep=keep)
