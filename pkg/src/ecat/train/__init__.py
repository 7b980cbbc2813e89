from .checkpoint import CheckpointError, load_checkpoint, peek_checkpoint, save_checkpoint
from .loop import EpochStats, TrainConfig, pretrain_stage1, train_stage2
from .loss import STAGE_FULL, STAGE_PRETRAIN, LossParts, LossWeights, joint_loss
from .optim import Adam, cosine_warmup_lr

__all__ = [
    "CheckpointError", "save_checkpoint", "load_checkpoint", "peek_checkpoint",
    "TrainConfig", "EpochStats", "pretrain_stage1", "train_stage2",
    "LossWeights", "LossParts", "joint_loss", "STAGE_PRETRAIN", "STAGE_FULL",
    "Adam", "cosine_warmup_lr",
]
