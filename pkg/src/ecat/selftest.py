"""Built-in verification suite behind ``ecat selftest``.

Covers the coder (round-trips incl. boundary and degenerate tables), the
autodiff layer set (64-bit finite differences), the conv/deconv adjoint
pairing, and a deterministic miniature pipeline whose artifacts
(checkpoint, bitstream, CSVs) are written to the output directory; two
runs with the same seed must produce byte-identical files.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .config import desk_config
from .data import synthetic_shapes
from .evaluate import evaluate
from .metrics import emit_curves
from .model.network import CompressionClassifier
from .nn import Tensor, check_scalar_fn, functional as F
from .codec.tables import gaussian_tables, tables_from_pmf
from .train import LossWeights, STAGE_FULL, TrainConfig, save_checkpoint, train_stage2, pretrain_stage1

__all__ = ["run_selftest"]


def _coder_suite(rng: np.random.Generator) -> None:
    for trial in range(10):
        k = int(rng.integers(2, 64))
        vmin = int(rng.integers(-40, 0))
        p = rng.dirichlet(np.ones(k) * 0.4)
        tb = tables_from_pmf(p, vmin=vmin)
        vals = rng.integers(vmin, vmin + k, size=int(rng.integers(1, 20_000)))
        assert np.array_equal(tb.decode(tb.encode(vals), len(vals)), vals), f"trial {trial}"
    # boundary symbols and a near-degenerate table
    tb = tables_from_pmf([1e-9, 1 - 2e-9, 1e-9], vmin=-1)
    for v in (-1, 0, 1):
        vv = np.full(5000, v)
        assert np.array_equal(tb.decode(tb.encode(vv), len(vv)), vv)
    # per-context gaussian tables
    mu = rng.normal(0, 3, 400)
    sigma = rng.uniform(0.1, 6, 400)
    tg = gaussian_tables(mu, sigma, -25, 25)
    vals = np.clip(np.round(rng.normal(mu, sigma)), -25, 25).astype(np.int64)
    ctx = np.arange(400)
    assert np.array_equal(tg.decode(tg.encode(vals, ctx=ctx), 400, ctx=ctx), vals)


def _gradient_suite(rng: np.random.Generator) -> float:
    worst = 0.0

    def acc(report):
        nonlocal worst
        worst = max(worst, report.worst)
        assert report.passed, str(report)

    m1 = Tensor(rng.standard_normal((2, 2, 3)))
    acc(check_scalar_fn(
        lambda x, w, b: F.sum(F.mul(F.conv2d(x, w, b, 2, 2), m1)),
        {"x": rng.standard_normal((4, 4, 2)), "w": rng.standard_normal((5, 5, 2, 3)) * 0.4,
         "b": rng.standard_normal(3) * 0.1}, tol=1e-5))
    m2 = Tensor(rng.standard_normal((6, 6, 2)))
    acc(check_scalar_fn(
        lambda x, w, b: F.sum(F.mul(F.deconv2d(x, w, b, 2, 2, 1), m2)),
        {"x": rng.standard_normal((3, 3, 3)), "w": rng.standard_normal((5, 5, 2, 3)) * 0.4,
         "b": rng.standard_normal(2) * 0.1}, tol=1e-5))
    m3 = Tensor(rng.standard_normal((4, 6)))
    acc(check_scalar_fn(
        lambda x, g, b: F.sum(F.mul(F.layer_norm(x, g, b), m3)),
        {"x": rng.standard_normal((4, 6)), "g": rng.standard_normal(6),
         "b": rng.standard_normal(6)}, tol=1e-5))
    acc(check_scalar_fn(
        lambda x: F.sum(F.mul(F.softmax(x), m3)),
        {"x": rng.standard_normal((4, 6))}, tol=1e-5))
    acc(check_scalar_fn(
        lambda d, s: F.sum(F.log(F.gaussian_bin_prob(d, s))),
        {"d": rng.standard_normal(12), "s": rng.uniform(0.3, 2.0, 12)}, tol=1e-5))
    acc(check_scalar_fn(
        lambda d, s: F.sum(F.log(F.logistic_bin_prob(d, s))),
        {"d": rng.standard_normal(12), "s": rng.uniform(0.3, 2.0, 12)}, tol=1e-5))
    m4 = Tensor(rng.standard_normal(20))
    acc(check_scalar_fn(
        lambda x: F.sum(F.mul(F.gelu(x), m4)),
        {"x": rng.standard_normal(20)}, tol=1e-5))
    return worst


def _adjoint_suite(rng: np.random.Generator) -> None:
    for _ in range(20):
        ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        x = Tensor(rng.standard_normal((4, 4, ci)).astype(np.float32))
        w = Tensor(rng.standard_normal((5, 5, ci, co)).astype(np.float32))
        y = Tensor(rng.standard_normal((2, 2, co)).astype(np.float32))
        lhs = float((F.conv2d(x, w, None, 2, 2).data * y.data).sum())
        rhs = float((x.data * F.deconv2d(y, w, None, 2, 2, 1).data).sum())
        assert abs(lhs - rhs) <= 1e-4 * max(1.0, abs(lhs)), (lhs, rhs)


def _pipeline_artifacts(out: Path, seed: int) -> None:
    cfg = desk_config()
    train = synthetic_shapes(48, seed=seed + 500)
    val = synthetic_shapes(8, seed=seed + 900)
    model = CompressionClassifier(cfg, seed=seed)
    tc1 = TrainConfig(epochs=2, batch_size=16, lr=1e-3, warmup_epochs=0.5, seed=seed,
                      augment=True, max_steps=4)
    pretrain_stage1(model, train, tc1)
    tc2 = TrainConfig(epochs=2, batch_size=16, lr=1e-4, warmup_epochs=0.5, seed=seed,
                      weight_decay=0.0, augment=True, max_steps=4)
    train_stage2(model, train, tc2, LossWeights(alpha=0.3, beta=0.003, stage=STAGE_FULL))
    save_checkpoint(out / "selftest.eckp", model, stage=2, epoch=2)

    stream = model.compress(val.images[0].astype(np.float32) / 255.0)
    (out / "selftest.ecat").write_bytes(stream)
    pack = model.decode_pack(stream)
    assert pack == model.make_pack(val.images[0].astype(np.float32) / 255.0)

    record, _ = evaluate(model, val, alpha=0.3, beta=0.003, seed=seed, limit=8)
    emit_curves([record], out)


def run_selftest(out_dir, seed: int = 0, verbose: bool = False) -> bool:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks = [
        ("coder round-trips", lambda: _coder_suite(np.random.default_rng(seed + 1))),
        ("gradient checks", lambda: _gradient_suite(np.random.default_rng(seed + 2))),
        ("conv/deconv adjoint", lambda: _adjoint_suite(np.random.default_rng(seed + 3))),
        ("pipeline artifacts", lambda: _pipeline_artifacts(out, seed)),
    ]
    ok = True
    for name, fn in checks:
        start = time.time()
        try:
            fn()
            status = "pass"
        except AssertionError as e:
            status = f"FAIL ({e})"
            ok = False
        if verbose:
            print(f"selftest: {name:>22}: {status}  [{time.time() - start:.1f}s]")
    return ok
