"""Weight initializers (all driven by an explicit Generator)."""

from __future__ import annotations

import numpy as np

__all__ = ["trunc_normal", "he_normal", "zeros"]


def trunc_normal(shape, std: float, rng: np.random.Generator) -> np.ndarray:
    """Normal(0, std) redrawn until within 2 std, like the ViT initializer."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2.0 * std
    # A couple of redraws leaves ~nothing; clip the stragglers.
    for _ in range(3):
        if not bad.any():
            break
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2.0 * std
    np.clip(out, -2.0 * std, 2.0 * std, out=out)
    return out.astype(np.float32)


def he_normal(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=np.float32)
