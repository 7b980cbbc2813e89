"""Command-line interface.

Commands: train-stage1, train-stage2, compress, decompress, classify,
evaluate, ablate, curves, selftest.  Exit codes: 0 success, 1 contract
violation, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import PROFILES, desk_config
from .data import DataError, Dataset, ingest, read_ppm, synthetic_shapes, write_ppm
from .evaluate import ablation_ladder, evaluate
from .metrics import MetricRecord, bpp, emit_curves, psnr, to_uint8
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

log = logging.getLogger("ecat")

_TRAIN_KEYS = {
    "epochs": int, "batch_size": int, "lr": float, "warmup_epochs": float,
    "weight_decay": float, "max_steps": int, "schedule": str, "augment": lambda s: s == "true",
}


def parse_config_file(path) -> dict:
    """key=value lines; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {raw!r} is not key=value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _TRAIN_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _TRAIN_KEYS[key](val)
    return out


def _model_for(args, need_checkpoint: bool = True) -> CompressionClassifier:
    cfg = PROFILES[args.profile]()
    model = CompressionClassifier(cfg, seed=args.seed)
    if need_checkpoint:
        if not args.checkpoint:
            raise ValueError("this command requires --checkpoint")
        load_checkpoint(args.checkpoint, model)
    return model


def _dataset_for(args, split: str) -> Dataset:
    cfg = PROFILES[args.profile]()
    if args.data:
        manifest = args.manifest or (Path(args.data) / "manifest.csv")
        return ingest(args.data, manifest, expect_hw=cfg.input_hw, num_classes=cfg.num_classes)
    n = args.limit or (2000 if split == "train" else 500)
    seed = 20_000 if split == "train" else 30_000
    return synthetic_shapes(n, seed=seed, size=cfg.input_hw[0], num_classes=cfg.num_classes)


def _train_cfg(args, defaults: TrainConfig) -> TrainConfig:
    overrides = parse_config_file(args.config) if args.config else {}
    return replace(defaults, seed=args.seed, **overrides)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_train_stage1(args) -> int:
    model = _model_for(args, need_checkpoint=False)
    dataset = _dataset_for(args, "train")
    cfg = _train_cfg(args, TrainConfig())
    history = pretrain_stage1(model, dataset, cfg)
    out = _out_dir(args) / "stage1.eckp"
    save_checkpoint(out, model, stage=1, epoch=cfg.epochs)
    print(f"stage-1 checkpoint: {out} (final loss {history[-1].total:.3f}, "
          f"psnr {history[-1].psnr:.2f} dB)")
    return 0


def cmd_train_stage2(args) -> int:
    model = _model_for(args)
    dataset = _dataset_for(args, "train")
    cfg = _train_cfg(args, TrainConfig(lr=1e-4, weight_decay=0.0))
    weights = LossWeights(alpha=args.alpha, beta=args.beta, stage=STAGE_FULL)
    history = train_stage2(model, dataset, cfg, weights)
    out = _out_dir(args) / f"stage2_a{args.alpha:g}_b{args.beta:g}.eckp"
    save_checkpoint(out, model, stage=2, epoch=cfg.epochs)
    print(f"stage-2 checkpoint: {out} (final loss {history[-1].total:.3f}, "
          f"rate {history[-1].rate:.0f} bits/img)")
    return 0


def cmd_compress(args) -> int:
    model = _model_for(args)
    image = read_ppm(args.input)
    stream = model.compress(image.astype(np.float32) / 255.0)
    out = Path(args.output) if args.output else _out_dir(args) / (Path(args.input).stem + ".ecat")
    out.write_bytes(stream)
    print(f"{out}: {len(stream)} bytes, {bpp(len(stream), image.shape[:2]):.4f} bpp")
    return 0


def cmd_decompress(args) -> int:
    model = _model_for(args)
    stream = Path(args.input).read_bytes()
    recon = to_uint8(model.decompress(stream))
    out = Path(args.output) if args.output else _out_dir(args) / (Path(args.input).stem + ".ppm")
    write_ppm(out, recon)
    line = f"{out}: {recon.shape[1]}x{recon.shape[0]}"
    if args.reference:
        line += f", psnr {psnr(read_ppm(args.reference), recon):.2f} dB"
    print(line)
    return 0


def cmd_classify(args) -> int:
    # Deliberately no image input: classification sees only coded bytes.
    model = _model_for(args)
    probs = model.classify_bits(Path(args.input).read_bytes())
    top = np.argsort(-probs)[:5]
    for rank, idx in enumerate(top, 1):
        print(f"{rank}. class {int(idx)}  p={probs[idx]:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    model = _model_for(args)
    dataset = _dataset_for(args, "val")
    record, _ = evaluate(
        model, dataset, alpha=args.alpha, beta=args.beta, seed=args.seed,
        checkpoint_id=Path(args.checkpoint).stem, limit=args.limit,
    )
    print(json.dumps(asdict(record), indent=2))
    if args.out:
        path = _out_dir(args) / f"{Path(args.checkpoint).stem}.metrics.json"
        path.write_text(json.dumps(asdict(record), indent=2))
        print(f"wrote {path}")
    return 0


def cmd_ablate(args) -> int:
    model = _model_for(args)
    dataset = _dataset_for(args, "val")
    ladder = ablation_ladder(model, dataset, limit=args.limit)
    for name, value in ladder.items():
        print(f"{name:>22}: {value:.2f} dB")
    return 0


def cmd_curves(args) -> int:
    records = []
    for path in sorted(Path(args.records).glob("*.metrics.json")):
        records.append(MetricRecord(**json.loads(path.read_text())))
    if not records:
        raise ValueError(f"no *.metrics.json records under {args.records}")
    rd, ra = emit_curves(records, _out_dir(args))
    print(f"wrote {rd} and {ra} ({len(records)} records)")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(_out_dir(args), seed=args.seed, verbose=True)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, data=False, alpha=False, io=False):
        p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="key=value training-config file")
        p.add_argument("--out", help="output directory")
        if checkpoint:
            p.add_argument("--checkpoint", help="model checkpoint (.eckp)")
        if data:
            p.add_argument("--data", help="dataset root (PPM tree); synthetic set if omitted")
            p.add_argument("--manifest", help="manifest CSV (default <data>/manifest.csv)")
            p.add_argument("--limit", type=int, help="cap the number of images")
        if alpha:
            p.add_argument("--alpha", type=float, default=0.3)
            p.add_argument("--beta", type=float, default=0.003)
        if io:
            p.add_argument("--input", required=True)
            p.add_argument("--output")
        return p

    common(sub.add_parser("train-stage1", help="pretrain without quantization"), data=True)
    common(sub.add_parser("train-stage2", help="full objective from a stage-1 checkpoint"),
           checkpoint=True, data=True, alpha=True)
    common(sub.add_parser("compress", help="image.ppm -> image.ecat"), checkpoint=True, io=True)
    p = common(sub.add_parser("decompress", help="image.ecat -> image.ppm"), checkpoint=True, io=True)
    p.add_argument("--reference", help="original PPM; prints PSNR against it")
    common(sub.add_parser("classify", help="top-5 classes from a bitstream"),
           checkpoint=True, io=True)
    common(sub.add_parser("evaluate", help="bpp/PSNR/top-1 over a dataset"),
           checkpoint=True, data=True, alpha=True)
    common(sub.add_parser("ablate", help="PSNR ladder as transformer features are removed"),
           checkpoint=True, data=True)
    p = common(sub.add_parser("curves", help="collect metric records into CSV curves"))
    p.add_argument("--records", required=True, help="directory of *.metrics.json files")
    common(sub.add_parser("selftest", help="coder round-trip + gradient-check suites"))
    return parser


_COMMANDS = {
    "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2,
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "curves": cmd_curves,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
