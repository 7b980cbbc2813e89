"""Cached experiment driver for the two-stage pipeline and its sweeps.

Training runs are content-addressed by (profile, training config, seeds,
loss weights), so re-running an evaluation or sweep reuses finished
checkpoints and metric records instead of retraining.  The cache
directory defaults to ./runs (override with ECAT_RUNS_DIR).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ModelConfig, desk_config
from .data import Dataset, synthetic_shapes
from .evaluate import ablation_ladder, evaluate
from .metrics import MetricRecord
from .model.network import CompressionClassifier
from .train import (
    LossWeights,
    STAGE_FULL,
    TrainConfig,
    load_checkpoint,
    pretrain_stage1,
    save_checkpoint,
    train_stage2,
)

__all__ = [
    "DeskPlan", "runs_dir", "desk_dataset",
    "run_stage1", "run_stage2", "eval_stage2", "ratio_sweep", "alpha_sweep",
    "ablation_by_seed",
]

log = logging.getLogger("ecat.experiments")

# Desk-scale defaults: 2000/500 split, ~15+25 epochs, batch 32.
TRAIN_N = 2000
VAL_N = 500
TRAIN_SEED = 20_000
VAL_SEED = 30_000


@dataclass(frozen=True)
class DeskPlan:
    """Everything that pins a desk training run (and its cache key)."""

    stage1_epochs: int = 30
    stage2_epochs: int = 30
    batch_size: int = 32
    stage1_lr: float = 1e-3
    stage2_lr: float = 1e-4
    warmup_epochs: float = 1.0
    weight_decay: float = 0.05

    def stage1_cfg(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.stage1_epochs, batch_size=self.batch_size, lr=self.stage1_lr,
            warmup_epochs=self.warmup_epochs, seed=seed, weight_decay=self.weight_decay,
        )

    def stage2_cfg(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.stage2_epochs, batch_size=self.batch_size, lr=self.stage2_lr,
            warmup_epochs=self.warmup_epochs, seed=seed, weight_decay=0.0,
        )


def runs_dir() -> Path:
    d = Path(os.environ.get("ECAT_RUNS_DIR", "runs"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def desk_dataset(split: str, n: Optional[int] = None) -> Dataset:
    if split == "train":
        return synthetic_shapes(n or TRAIN_N, seed=TRAIN_SEED)
    if split == "val":
        return synthetic_shapes(n or VAL_N, seed=VAL_SEED)
    raise ValueError(f"unknown split {split!r}")


def _cfg_fingerprint(cfg: ModelConfig) -> str:
    return cfg.digest().hex()


def run_stage1(
    seed: int,
    plan: DeskPlan = DeskPlan(),
    cfg: Optional[ModelConfig] = None,
    dataset: Optional[Dataset] = None,
) -> Path:
    """Train (or reuse) the stage-1 checkpoint for one seed."""
    cfg = cfg or desk_config()
    key = _key("stage1", _cfg_fingerprint(cfg), asdict(plan), seed, TRAIN_N, TRAIN_SEED)
    path = runs_dir() / f"stage1_{seed}_{key}.eckp"
    if path.exists():
        return path
    log.info("training stage-1 seed=%d -> %s", seed, path.name)
    dataset = dataset if dataset is not None else desk_dataset("train")
    model = CompressionClassifier(cfg, seed=seed)
    pretrain_stage1(model, dataset, plan.stage1_cfg(seed))
    save_checkpoint(path, model, stage=1, epoch=plan.stage1_epochs)
    return path


def run_stage2(
    seed: int,
    alpha: float,
    beta: float,
    plan: DeskPlan = DeskPlan(),
    cfg: Optional[ModelConfig] = None,
    dataset: Optional[Dataset] = None,
) -> Path:
    """Train (or reuse) a stage-2 checkpoint at one (alpha, beta) point."""
    cfg = cfg or desk_config()
    key = _key(
        "stage2", _cfg_fingerprint(cfg), asdict(plan), seed, alpha, beta, TRAIN_N, TRAIN_SEED
    )
    path = runs_dir() / f"stage2_a{alpha:g}_b{beta:g}_s{seed}_{key}.eckp"
    if path.exists():
        return path
    stage1 = run_stage1(seed, plan, cfg, dataset)
    log.info("training stage-2 seed=%d alpha=%g beta=%g -> %s", seed, alpha, beta, path.name)
    dataset = dataset if dataset is not None else desk_dataset("train")
    model = CompressionClassifier(cfg, seed=seed)
    load_checkpoint(stage1, model)
    weights = LossWeights(alpha=alpha, beta=beta, stage=STAGE_FULL)
    train_stage2(model, dataset, plan.stage2_cfg(seed), weights)
    save_checkpoint(path, model, stage=2, epoch=plan.stage2_epochs)
    return path


def load_model(path: Path, cfg: Optional[ModelConfig] = None) -> CompressionClassifier:
    cfg = cfg or desk_config()
    model = CompressionClassifier(cfg, seed=0)
    load_checkpoint(path, model)
    return model


def eval_stage2(
    seed: int,
    alpha: float,
    beta: float,
    plan: DeskPlan = DeskPlan(),
    cfg: Optional[ModelConfig] = None,
    val: Optional[Dataset] = None,
) -> MetricRecord:
    """Evaluate (or reuse) the metric record of one stage-2 operating point."""
    cfg = cfg or desk_config()
    ckpt = run_stage2(seed, alpha, beta, plan, cfg)
    rec_path = ckpt.with_suffix(".metrics.json")
    if rec_path.exists():
        data = json.loads(rec_path.read_text())
        return MetricRecord(**data)
    model = load_model(ckpt, cfg)
    val = val if val is not None else desk_dataset("val")
    record, _ = evaluate(
        model, val, alpha=alpha, beta=beta, seed=seed, checkpoint_id=ckpt.stem
    )
    rec_path.write_text(json.dumps(asdict(record), indent=2))
    return record


def alpha_sweep(
    alphas=(0.1, 0.3, 0.6), ratio: float = 100.0, seeds=(0, 1, 2), plan: DeskPlan = DeskPlan()
) -> dict[float, list[MetricRecord]]:
    """Rate sweep: alpha in {0.1, 0.3, 0.6} at a fixed alpha/beta ratio."""
    return {
        a: [eval_stage2(s, a, a / ratio, plan) for s in seeds] for a in alphas
    }


def ratio_sweep(
    ratios=(50.0, 100.0, 200.0), beta: float = 0.003, seeds=(0, 1, 2), plan: DeskPlan = DeskPlan()
) -> dict[float, list[MetricRecord]]:
    """Trade-off sweep at matched bit-rate: beta fixed, alpha = ratio * beta.

    Holding beta fixed keeps the distortion pressure (the dominant rate
    driver) constant, so the three points land at closely matched bpp and
    the ratio reallocates bits between the two tasks.
    """
    return {
        r: [eval_stage2(s, r * beta, beta, plan) for s in seeds] for r in ratios
    }


def ablation_by_seed(
    seeds=(0, 1, 2), alpha: float = 0.3, beta: float = 0.003, plan: DeskPlan = DeskPlan(),
    limit: Optional[int] = None,
) -> list[dict[str, float]]:
    """Feature-removal PSNR ladder per seed on the validation split."""
    val = desk_dataset("val")
    ladders = []
    for s in seeds:
        model = load_model(run_stage2(s, alpha, beta, plan))
        ladders.append(ablation_ladder(model, val, limit=limit))
    return ladders
