import logging

import numpy as np
import pytest

from ecat import desk_config
from ecat.data import synthetic_shapes
from ecat.model.network import CompressionClassifier
from ecat.train import LossWeights, STAGE_FULL, TrainConfig, pretrain_stage1, train_stage2

logging.getLogger("ecat.train").setLevel(logging.WARNING)


@pytest.fixture(scope="session")
def cfg():
    return desk_config()


@pytest.fixture(scope="session")
def tiny_ds():
    return synthetic_shapes(16, seed=77)


@pytest.fixture(scope="session")
def fresh_model(cfg):
    """Untrained model; do not mutate (use model_factory for that)."""
    return CompressionClassifier(cfg, seed=0)


@pytest.fixture()
def model_factory(cfg):
    def make(seed=0):
        return CompressionClassifier(cfg, seed=seed)

    return make


@pytest.fixture(scope="session")
def warm_model(cfg):
    """A briefly trained model: latents/priors are no longer at init.

    Used where tests need 'trained-model' statistics (rate conformance,
    coding paths) without paying for a full run.
    """
    ds = synthetic_shapes(64, seed=900)
    model = CompressionClassifier(cfg, seed=3)
    tc1 = TrainConfig(epochs=2, batch_size=16, lr=1e-3, warmup_epochs=0.25, seed=3,
                      augment=False, max_steps=8)
    pretrain_stage1(model, ds, tc1)
    tc2 = TrainConfig(epochs=5, batch_size=16, lr=2e-4, warmup_epochs=0.25, seed=3,
                      weight_decay=0.0, augment=False, max_steps=20)
    train_stage2(model, ds, tc2, LossWeights(alpha=0.3, beta=0.003, stage=STAGE_FULL))
    return model
