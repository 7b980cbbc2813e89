"""Model configuration and named profiles.

The architecture is fixed; a profile only scales its widths.  "paper" is
the full-size setting, "desk" is the CPU-scale default used by the tests
and the synthetic dataset pipeline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

__all__ = ["ModelConfig", "PROFILES", "desk_config", "paper_config"]

# Main transform downsamples 16x, the hyper transform another 4x.
MAIN_FACTOR = 16
HYPER_FACTOR = 4


@dataclass(frozen=True)
class ModelConfig:
    input_hw: tuple[int, int]
    channels_n: int      # conv widths of analysis/synthesis/hyper stacks
    channels_m: int      # latent channel count
    embed_c: int         # transformer embedding width
    depth_l: int         # transformer block count
    heads: int
    num_classes: int
    ffn_ratio: float = 4.0

    def __post_init__(self):
        h, w = self.input_hw
        # The main transform must tile exactly; the hyper stage handles odd
        # extents (e.g. 224 -> 14 -> 7 -> 4) by ceil division plus cropping.
        if h % MAIN_FACTOR or w % MAIN_FACTOR:
            raise ValueError("input extents must be multiples of 16")
        if self.embed_c % self.heads:
            raise ValueError("embed_c must be divisible by heads")
        if self.embed_c % 4:
            raise ValueError("embed_c must be divisible by 4 (aggregation branches)")
        for field in ("channels_n", "channels_m", "embed_c", "depth_l", "heads", "num_classes"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if self.ffn_ratio <= 0:
            raise ValueError("ffn_ratio must be positive")

    @property
    def latent_hw(self) -> tuple[int, int]:
        return (self.input_hw[0] // MAIN_FACTOR, self.input_hw[1] // MAIN_FACTOR)

    @property
    def hyper_hw(self) -> tuple[int, int]:
        h, w = self.latent_hw
        return (-(-h // HYPER_FACTOR), -(-w // HYPER_FACTOR))

    @property
    def tokens(self) -> int:
        h, w = self.latent_hw
        return h * w

    def digest(self) -> bytes:
        """8-byte fingerprint used by bitstream and checkpoint headers."""
        key = "|".join(
            str(v)
            for v in (
                self.input_hw[0], self.input_hw[1], self.channels_n, self.channels_m,
                self.embed_c, self.depth_l, self.heads, self.num_classes, self.ffn_ratio,
            )
        )
        return hashlib.sha256(key.encode()).digest()[:8]

    def with_overrides(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def paper_config(num_classes: int = 1000) -> ModelConfig:
    return ModelConfig(
        input_hw=(224, 224), channels_n=128, channels_m=192,
        embed_c=384, depth_l=12, heads=6, num_classes=num_classes,
    )


def desk_config(num_classes: int = 10) -> ModelConfig:
    return ModelConfig(
        input_hw=(64, 64), channels_n=32, channels_m=48,
        embed_c=96, depth_l=4, heads=4, num_classes=num_classes,
    )


PROFILES = {"paper": paper_config, "desk": desk_config}
