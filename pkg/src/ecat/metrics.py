"""Rate / distortion / accuracy metrics and the CSV curve emitter."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["psnr", "bpp", "to_uint8", "MetricRecord", "emit_curves", "PSNR_CAP_DB"]

PSNR_CAP_DB = 100.0
CURVE_COLUMNS = ["bpp", "psnr", "top1", "alpha", "beta", "seed"]


def to_uint8(x01: np.ndarray) -> np.ndarray:
    """Denormalized [0,1] float -> clamped, rounded 8-bit pixels."""
    return np.clip(np.round(np.asarray(x01) * 255.0), 0, 255).astype(np.uint8)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) over 8-bit pixels, capped at 100 dB."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != np.uint8 or b.dtype != np.uint8:
        raise ValueError("psnr compares 8-bit images; convert with to_uint8 first")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(255.0**2 / mse), PSNR_CAP_DB)


def bpp(n_bytes: int, hw: tuple[int, int]) -> float:
    """Coded bits per pixel, headers included."""
    return 8.0 * n_bytes / (hw[0] * hw[1])


@dataclass(frozen=True)
class MetricRecord:
    bpp: float
    psnr: float
    top1: float
    alpha: float
    beta: float
    seed: int
    checkpoint_id: str = ""

    def row(self) -> list[str]:
        return [
            f"{self.bpp:.6f}", f"{self.psnr:.4f}", f"{self.top1:.4f}",
            f"{self.alpha:g}", f"{self.beta:g}", str(self.seed),
        ]


def emit_curves(records: Sequence[MetricRecord], out_dir) -> tuple[Path, Path]:
    """Write rate_distortion.csv and rate_accuracy.csv, sorted by bpp."""
    if not records:
        raise ValueError("emit_curves needs at least one record")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: (r.bpp, r.alpha, r.seed))
    paths = (out_dir / "rate_distortion.csv", out_dir / "rate_accuracy.csv")
    for path in paths:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CURVE_COLUMNS)
            for rec in ordered:
                writer.writerow(rec.row())
    return paths
