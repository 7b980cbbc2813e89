"""Two-step training: pretraining without quantization, then the full
objective with quantizer noise and the hyper-prior active.

All stochasticity (shuffling, augmentation, quantizer noise) derives
from one master seed, so identical configs reproduce identical loss
curves and checkpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ..data import Dataset, augment_batch
from ..model.network import CompressionClassifier, draw_quantizer_noise
from .loss import STAGE_FULL, STAGE_PRETRAIN, LossParts, LossWeights, joint_loss
from .optim import Adam, cosine_warmup_lr

__all__ = ["TrainConfig", "pretrain_stage1", "train_stage2", "EpochStats"]

log = logging.getLogger("ecat.train")

# Pretraining balance: cross-entropy is far smaller than the pixel-sum MSE.
STAGE1_ALPHA = 1.0
STAGE1_BETA = 0.001


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    lr: float = 1e-3
    warmup_epochs: float = 1.0
    seed: int = 0
    weight_decay: float = 0.05
    augment: bool = True
    max_steps: Optional[int] = None  # hard cap across epochs (smoke tests)
    schedule: str = "cosine"         # cosine | constant | trapezoid

    def __post_init__(self):
        if self.warmup_epochs >= self.epochs:
            raise ValueError("warmup must be shorter than the run")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.schedule not in ("cosine", "constant", "trapezoid"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class EpochStats:
    epoch: int
    total: float
    ce: float
    mse: float
    rate: float
    psnr: float
    lr: float


def _fit(
    model: CompressionClassifier,
    dataset: Dataset,
    cfg: TrainConfig,
    weights: LossWeights,
    use_weight_decay: bool,
    hook: Optional[Callable[[EpochStats], None]] = None,
) -> list[EpochStats]:
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    steps_per_epoch = -(-n // cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    warmup_steps = int(round(cfg.warmup_epochs * steps_per_epoch))

    opt = Adam(
        model.parameters(),
        weight_decay=cfg.weight_decay if use_weight_decay else 0.0,
    )
    root = np.random.SeedSequence(
        [cfg.seed, 1 if weights.stage == STAGE_PRETRAIN else 2]
    )
    shuffle_rng, aug_rng, noise_rng = (np.random.default_rng(s) for s in root.spawn(3))

    history: list[EpochStats] = []
    step = 0
    for epoch in range(cfg.epochs):
        if step >= total_steps:
            break
        order = shuffle_rng.permutation(n)
        sums = np.zeros(5)
        batches = 0
        lr = 0.0
        for start in range(0, n, cfg.batch_size):
            if step >= total_steps:
                break
            idx = order[start : start + cfg.batch_size]
            x01, labels = dataset.batch01(idx)
            if cfg.augment:
                x01 = augment_batch(x01, aug_rng)
            noise = (
                draw_quantizer_noise(model.cfg, len(idx), noise_rng)
                if weights.stage == STAGE_FULL
                else None
            )
            parts = joint_loss(model, x01, labels, weights, noise=noise)
            model.zero_grad()
            parts.total.backward()
            if cfg.schedule == "cosine":
                lr = cosine_warmup_lr(step, total_steps, warmup_steps, cfg.lr)
            elif cfg.schedule == "trapezoid":
                # Constant plateau, cosine tail over the final 20%.
                tail = max(int(round(total_steps * 0.8)), warmup_steps)
                if step < tail:
                    lr = cfg.lr * (step / warmup_steps if warmup_steps and step < warmup_steps else 1.0)
                else:
                    lr = cosine_warmup_lr(step - tail, total_steps - tail, 0, cfg.lr)
            else:
                lr = cfg.lr * (step / warmup_steps if warmup_steps and step < warmup_steps else 1.0)
            opt.step(lr)
            step += 1
            sums += [float(parts.total.data), parts.ce, parts.mse, parts.rate, parts.batch_psnr]
            batches += 1
        stats = EpochStats(epoch, *(sums / max(batches, 1)), lr=lr)
        history.append(stats)
        log.info(
            "stage=%s epoch=%d total=%.4f ce=%.4f mse=%.1f rate=%.1f psnr=%.2f lr=%.2e",
            weights.stage, epoch, stats.total, stats.ce, stats.mse, stats.rate, stats.psnr, lr,
        )
        if hook is not None:
            hook(stats)
    return history


def pretrain_stage1(
    model: CompressionClassifier,
    dataset: Dataset,
    cfg: TrainConfig,
    hook=None,
) -> list[EpochStats]:
    """Stage 1: continuous latent, no rate term, AdamW."""
    model.set_normalization(*dataset.channel_stats())
    weights = LossWeights(alpha=STAGE1_ALPHA, beta=STAGE1_BETA, stage=STAGE_PRETRAIN)
    return _fit(model, dataset, cfg, weights, use_weight_decay=True, hook=hook)


def train_stage2(
    model: CompressionClassifier,
    dataset: Dataset,
    cfg: TrainConfig,
    weights: LossWeights,
    hook=None,
) -> list[EpochStats]:
    """Stage 2: quantizer noise + hyper-prior, plain Adam, full objective.

    The model should carry stage-1 parameters already (loaded from a
    checkpoint); normalization stats are kept from stage 1.
    """
    if weights.stage != STAGE_FULL:
        raise ValueError("stage-2 training requires full-stage weights")
    return _fit(model, dataset, cfg, weights, use_weight_decay=False, hook=hook)
