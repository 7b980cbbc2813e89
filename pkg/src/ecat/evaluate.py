"""Full coding-loop evaluation: every image goes through a real bitstream.

Classification happens from the deserialized latents (never from pixels);
reconstruction is scored as PSNR on clamped 8-bit output.  bpp counts the
whole container, header included.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .data import Dataset
from .metrics import MetricRecord, bpp, psnr, to_uint8
from .model.network import CompressionClassifier

__all__ = ["evaluate", "ablation_ladder", "EvalDetail"]


@dataclass
class EvalDetail:
    bpp: list[float] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    correct: list[bool] = field(default_factory=list)
    n_bytes: list[int] = field(default_factory=list)


def evaluate(
    model: CompressionClassifier,
    dataset: Dataset,
    alpha: float = 0.0,
    beta: float = 0.0,
    seed: int = 0,
    checkpoint_id: str = "",
    keep: Optional[Iterable[int]] = None,
    limit: Optional[int] = None,
) -> tuple[MetricRecord, EvalDetail]:
    n = len(dataset) if limit is None else min(limit, len(dataset))
    if n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    hw = dataset.hw
    detail = EvalDetail()
    for i in range(n):
        x01, label = dataset.images[i].astype(np.float32) / 255.0, int(dataset.labels[i])
        stream = model.compress(x01)
        pack = model.decode_pack(stream)
        probs = model.classify_pack(pack)
        xhat = model.reconstruct_pack(pack, keep=keep)
        detail.n_bytes.append(len(stream))
        detail.bpp.append(bpp(len(stream), hw))
        detail.psnr.append(psnr(dataset.images[i], to_uint8(xhat)))
        detail.correct.append(int(np.argmax(probs)) == label)
    record = MetricRecord(
        bpp=float(np.mean(detail.bpp)),
        psnr=float(np.mean(detail.psnr)),
        top1=float(np.mean(detail.correct)),
        alpha=alpha,
        beta=beta,
        seed=seed,
        checkpoint_id=checkpoint_id,
    )
    return record, detail


def ablation_ladder(
    model: CompressionClassifier, dataset: Dataset, limit: Optional[int] = None
) -> dict[str, float]:
    """Mean PSNR as transformer features are removed from aggregation.

    Keys name the kept features; dropped ones are zeroed, matching how the
    aggregation module is probed after training.
    """
    ladder = {}
    for keep, name in [
        ((), "latent-only"),
        ((1,), "latent+block1"),
        ((1, 2), "latent+block1+block2"),
        ((1, 2, 3), "all"),
    ]:
        _, detail = evaluate(model, dataset, keep=keep, limit=limit)
        ladder[name] = float(np.mean(detail.psnr))
    return ladder
