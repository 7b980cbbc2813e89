"""Dataset ingestion, P6 PPM I/O, the synthetic desk corpus and augmentation.

Images are 8-bit RGB of one uniform size per split.  PPM (P6, maxval 255)
is the only file format: lossless and parseable anywhere.  The synthetic
generator draws ten large geometric shape classes over textured
backgrounds so the pipeline can be trained and evaluated without any
external downloads; everything is deterministic in (seed, index).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "Dataset", "DataError", "read_ppm", "write_ppm", "ingest",
    "synthetic_shapes", "write_dataset", "augment_batch", "SHAPE_NAMES",
]


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray                 # uint8 [N, H, W, 3]
    labels: np.ndarray                 # int64 [N]
    paths: Optional[list[str]] = None  # source files when loaded from disk

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise DataError("images must be [N, H, W, 3] RGB")
        if len(self.images) != len(self.labels):
            raise DataError("images/labels length mismatch")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def hw(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def batch01(self, idx) -> tuple[np.ndarray, np.ndarray]:
        return self.images[idx].astype(np.float32) / 255.0, self.labels[idx]

    def channel_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel mean/std in [0,1] over the whole split."""
        x = self.images.reshape(-1, 3).astype(np.float64) / 255.0
        return x.mean(axis=0).astype(np.float32), (x.std(axis=0) + 1e-6).astype(np.float32)


# -- PPM ------------------------------------------------------------------


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise DataError("unexpected end of PPM header")
    return buf[start:pos], pos


def read_ppm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if not buf.startswith(b"P6"):
        raise DataError(f"{path}: not a binary P6 PPM")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        if not tok.isdigit():
            raise DataError(f"{path}: malformed PPM header token {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported (got {maxval})")
    pos += 1  # single whitespace after maxval
    need = width * height * 3
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise DataError(f"{path}: truncated raster ({len(raster)} of {need} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise DataError("write_ppm needs an [H, W, 3] uint8 image")
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(image.tobytes())


def ingest(
    root, manifest, expect_hw: Optional[tuple[int, int]] = None, num_classes: Optional[int] = None
) -> Dataset:
    """Load a "path,label" CSV manifest of PPM files, in manifest order."""
    root = Path(root)
    rows: list[tuple[str, int]] = []
    with open(manifest, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise DataError(f"manifest row {row!r} is not 'path,label'")
            rows.append((row[0].strip(), int(row[1])))
    if not rows:
        raise DataError("manifest is empty")

    images, labels, paths = [], [], []
    for rel, label in rows:
        img = read_ppm(root / rel)
        if expect_hw is not None and img.shape[:2] != tuple(expect_hw):
            raise DataError(f"{rel}: size {img.shape[:2]} does not match expected {expect_hw}")
        if num_classes is not None and not 0 <= label < num_classes:
            raise DataError(f"{rel}: label {label} out of range [0, {num_classes})")
        if label < 0:
            raise DataError(f"{rel}: negative label")
        images.append(img)
        labels.append(label)
        paths.append(rel)
    stacked = np.stack(images)
    if len({img.shape for img in images}) != 1:
        raise DataError("all images in a split must share one size")
    return Dataset(images=stacked, labels=np.asarray(labels), paths=paths)


def write_dataset(ds: Dataset, out_dir) -> Path:
    """Write PPMs plus manifest.csv; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f)
        for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
            rel = f"images/{i:05d}.ppm"
            write_ppm(out_dir / rel, img)
            writer.writerow([rel, int(label)])
    return manifest


# -- synthetic shapes corpus -------------------------------------------------

SHAPE_NAMES = [
    "circle", "square", "triangle", "ring", "plus",
    "cross", "hbars", "vbars", "diamond", "checker",
]


def _soft(mask: np.ndarray, width: float = 1.2) -> np.ndarray:
    return np.clip(mask / width + 0.5, 0.0, 1.0)


def _shape_mask(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size / 2 + rng.uniform(-size * 0.08, size * 0.08)
    cx = size / 2 + rng.uniform(-size * 0.08, size * 0.08)
    r = size * rng.uniform(0.28, 0.40)
    dy, dx = yy - cy, xx - cx

    if label == 0:  # circle
        return _soft(r - np.hypot(dy, dx))
    if label == 1:  # square
        return _soft(r - np.maximum(np.abs(dy), np.abs(dx)))
    if label == 2:  # triangle (upward)
        h = r * 1.6
        inside = np.minimum(dy + h / 2, (h / 2 - dy) / 2 - np.abs(dx) * h / (2 * r))
        return _soft(inside)
    if label == 3:  # ring
        d = np.hypot(dy, dx)
        return _soft(np.minimum(r - d, d - r * 0.55))
    if label == 4:  # plus
        arm = r * rng.uniform(0.30, 0.40)
        bar_v = np.minimum(r - np.abs(dy), arm - np.abs(dx))
        bar_h = np.minimum(arm - np.abs(dy), r - np.abs(dx))
        return _soft(np.maximum(bar_v, bar_h))
    if label == 5:  # diagonal cross
        arm = r * rng.uniform(0.30, 0.40)
        u, v = (dy + dx) / np.sqrt(2), (dy - dx) / np.sqrt(2)
        d1 = np.minimum(r - np.abs(u), arm - np.abs(v))
        d2 = np.minimum(arm - np.abs(u), r - np.abs(v))
        return _soft(np.maximum(d1, d2))
    if label == 6:  # horizontal bars
        period = size / rng.uniform(3.0, 4.0)
        wave = np.cos(2 * np.pi * (yy - cy) / period) * period / 4
        return _soft(np.minimum(wave, r * 1.2 - np.maximum(np.abs(dy), np.abs(dx))))
    if label == 7:  # vertical bars
        period = size / rng.uniform(3.0, 4.0)
        wave = np.cos(2 * np.pi * (xx - cx) / period) * period / 4
        return _soft(np.minimum(wave, r * 1.2 - np.maximum(np.abs(dy), np.abs(dx))))
    if label == 8:  # diamond
        return _soft(r * 1.2 - (np.abs(dy) + np.abs(dx)))
    if label == 9:  # 2x2 checker
        q = ((dy >= 0) ^ (dx >= 0)).astype(np.float64) * 2 - 1
        return _soft(np.minimum(q * size, r * 1.2 - np.maximum(np.abs(dy), np.abs(dx))))
    raise DataError(f"unknown shape label {label}")


def _render(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    # Background: smooth gradient plus low-frequency waves.  Texture must
    # stay compressible (no iid grain) or it dominates both the rate budget
    # and the PSNR ceiling of every model.
    c0 = rng.uniform(0.05, 0.95, 3)
    c1 = rng.uniform(0.05, 0.95, 3)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    t = (yy if rng.integers(0, 2) else xx)[..., None]
    bg = c0 * (1 - t) + c1 * t
    for _ in range(2):
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(size / 3, size)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) * size / period + phase)
        bg += rng.uniform(0.015, 0.035) * wave[..., None] * rng.uniform(0.3, 1.0, 3)

    # Foreground color with guaranteed luminance contrast against the mean bg.
    lum_w = np.array([0.299, 0.587, 0.114])
    bg_lum = float(bg.reshape(-1, 3).mean(0) @ lum_w)
    for _ in range(32):
        fg = rng.uniform(0.0, 1.0, 3)
        if abs(float(fg @ lum_w) - bg_lum) > 0.25:
            break

    mask = _shape_mask(label, size, rng)[..., None]
    img = bg * (1 - mask) + fg * mask
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def synthetic_shapes(n: int, seed: int, size: int = 64, num_classes: int = 10) -> Dataset:
    """Balanced shape-classification corpus; class = shape identity."""
    if num_classes > len(SHAPE_NAMES):
        raise DataError(f"at most {len(SHAPE_NAMES)} shape classes available")
    images = np.empty((n, size, size, 3), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        label = i % num_classes
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        images[i] = _render(label, size, rng)
        labels[i] = label
    return Dataset(images=images, labels=labels)


# -- augmentation --------------------------------------------------------------


def augment_batch(
    x01: np.ndarray, rng: np.random.Generator, pad: int = 4, flip: bool = True
) -> np.ndarray:
    """Random shift (reflect-padded crop) and horizontal flip, per image."""
    b, h, w, _ = x01.shape
    out = np.empty_like(x01)
    padded = np.pad(x01, ((0, 0), (pad, pad), (pad, pad), (0, 0)), mode="reflect")
    offs = rng.integers(0, 2 * pad + 1, size=(b, 2))
    flips = rng.random(b) < 0.5 if flip else np.zeros(b, dtype=bool)
    for i in range(b):
        oy, ox = offs[i]
        img = padded[i, oy : oy + h, ox : ox + w]
        out[i] = img[:, ::-1] if flips[i] else img
    return out
