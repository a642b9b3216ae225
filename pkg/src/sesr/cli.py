"""Command-line interface: data preparation, training, inference, RoI
extraction, evaluation, and design-choice benchmarking.

Exit codes: 0 success, 2 usage, 3 dataset/layout validation, 4 numeric.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import dataset as ds
from . import trainer as tr
from .errors import ConfigurationError, NumericError, ValidationError
from .imagecore import (
    MIN_DIM,
    bicubic_resize,
    downsample_by_scale,
    load_image,
    load_mask,
    save_image,
    save_mask,
)
from .losses import LossWeights
from .model import (
    ModelConfig,
    build_model,
    count_params,
    init_params,
    load_checkpoint,
    to_image,
    to_nchw,
)
from .roi import select_roi
from .trainer import TrainConfig, format_mean_std

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"size must look like 160x120, got {text!r}") from exc
    if w < MIN_DIM or h < MIN_DIM:
        raise argparse.ArgumentTypeError(f"size must be at least {MIN_DIM}x{MIN_DIM}")
    return w, h


# ---------------------------------------------------------------------------
# Flat key/value training config.
# ---------------------------------------------------------------------------

_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"model", "loss_weights"}
_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
_LOSS_KEYS = {f.name for f in dataclasses.fields(LossWeights)}


def parse_train_config(doc: dict) -> TrainConfig:
    """Build the nested training configuration from one flat mapping.

    The single `seed` key drives both data order and weight init. Unknown
    keys are rejected by name.
    """
    unknown = set(doc) - _TRAIN_KEYS - _MODEL_KEYS - _LOSS_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    model = ModelConfig(**{k: doc[k] for k in _MODEL_KEYS & set(doc)})
    weights = LossWeights(**{k: doc[k] for k in _LOSS_KEYS & set(doc)})
    train_kwargs = {k: doc[k] for k in _TRAIN_KEYS & set(doc)}
    return TrainConfig(model=model, loss_weights=weights, **train_kwargs)


def _load_manifest_dir(path: Path) -> ds.Manifest:
    manifest_file = path / "manifest.json"
    if manifest_file.exists():
        return ds.load_manifest(manifest_file)
    return ds.build_manifest(path)


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    input_dir = Path(args.input)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {input_dir}")
    hr_dir = input_dir / "hr" if (input_dir / "hr").is_dir() else input_dir
    images = sorted(p for p in hr_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise ValidationError(f"{hr_dir}: no PNG/JPEG images found")
    sal_dir = input_dir / "saliency"

    out = Path(args.output)
    subs = ["hr", "lr", "lrd"] + (["saliency"] if sal_dir.is_dir() else [])
    for sub in subs:
        (out / sub).mkdir(parents=True, exist_ok=True)

    for path in images:
        name = path.stem
        img = load_image(path)
        if min(img.shape[:2]) < MIN_DIM * args.scale:
            raise ValidationError(
                f"{path}: {img.shape[0]}x{img.shape[1]} too small for scale "
                f"{args.scale} (LR side would drop below {MIN_DIM})"
            )
        sub_seed = ds.prepare_sample_seed(args.seed, name)
        distorted = ds.synth_distort(img, sub_seed) if args.synthetic_distort else img
        spec = ds.DegradeSpec(
            set_id=args.set,
            scale=args.scale,
            kernel_size=args.kernel_size,
            noise_level=args.noise_level,
            seed=sub_seed,
        )
        x = ds.degrade(distorted, spec)
        save_image(img, out / "hr" / f"{name}.png")
        save_image(downsample_by_scale(img, args.scale), out / "lr" / f"{name}.png")
        save_image(x, out / "lrd" / f"{name}.png")
        if sal_dir.is_dir():
            sal_path = sal_dir / f"{name}.png"
            if not sal_path.exists():
                raise ValidationError(f"{sal_path}: missing saliency map for {name}")
            mask = load_mask(sal_path)
            save_mask(
                bicubic_resize(mask, x.shape[0], x.shape[1]),
                out / "saliency" / f"{name}.png",
            )

    manifest = ds.build_manifest(out)
    ds.save_manifest(manifest, out / "manifest.json")
    by_scale: dict[int, int] = {}
    for entry in manifest.entries:
        by_scale[entry["scale"]] = by_scale.get(entry["scale"], 0) + 1
    for scale, count in sorted(by_scale.items()):
        print(f"scale {scale}x: {count} samples")
    print(f"manifest: {out / 'manifest.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{args.config}: expected a flat JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    config = parse_train_config(doc)
    train_manifest = _load_manifest_dir(Path(args.data))
    val_manifest = _load_manifest_dir(Path(args.val)) if args.val else None
    ckpt, log = tr.train(
        train_manifest, val_manifest, config, args.out, resume_from=args.resume
    )
    totals = log.step_totals()
    if totals:
        window = max(1, min(25, len(totals) // 2))
        first, last = tr.smoothed_endpoints(totals, window=window)
        print(f"steps: {ckpt.step}  loss: {first:.4g} -> {last:.4g}")
    print(f"final checkpoint: {Path(args.out) / 'final.ckpt'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def _check_input_dims(img, path) -> None:
    if min(img.shape[:2]) < MIN_DIM:
        raise ValueError(
            f"{path}: input {img.shape[0]}x{img.shape[1]} below the expected "
            f"minimum of {MIN_DIM}x{MIN_DIM}"
        )


def cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    net = build_model(ckpt.config, ckpt.weights).eval()
    if args.mode == "saliency" and not ckpt.config.use_aan:
        raise ConfigurationError("checkpoint was trained without the saliency head")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.input:
        img = load_image(path)
        _check_input_dims(img, path)
        x = to_nchw(img)
        name = Path(path).stem
        with torch.no_grad():
            if args.mode == "sesr":
                _, e_hat, y_hat = net(x)
                save_image(to_image(y_hat), out / f"{name}_sesr.png")
                if args.dump_enhanced:
                    save_image(to_image(e_hat), out / f"{name}_enhanced.png")
            elif args.mode == "enhance":
                _, e_hat = net.forward_enhance_only(x)
                save_image(to_image(e_hat), out / f"{name}_enhanced.png")
            else:
                s_hat, _ = net.forward_enhance_only(x)
                save_mask(to_image(s_hat), out / f"{name}_saliency.png")
        print(f"{path} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# roi
# ---------------------------------------------------------------------------

def _pad_to_min(img: np.ndarray, min_hw: int = MIN_DIM) -> np.ndarray:
    pad_h = max(0, min_hw - img.shape[0])
    pad_w = max(0, min_hw - img.shape[1])
    if pad_h == 0 and pad_w == 0:
        return img
    return np.pad(img, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")


def cmd_roi(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    if not ckpt.config.use_aan:
        raise ConfigurationError("RoI selection needs a checkpoint with the saliency head")
    net = build_model(ckpt.config, ckpt.weights).eval()
    img = load_image(args.input)
    _check_input_dims(img, args.input)
    with torch.no_grad():
        s_hat, e_hat = net.forward_enhance_only(to_nchw(img))
    box = select_roi(to_image(s_hat), bandwidth=args.bandwidth, threshold=args.threshold)
    enhanced = to_image(e_hat)
    crop = _pad_to_min(enhanced[box.y0 : box.y1, box.x0 : box.x1])
    with torch.no_grad():
        _, _, y_crop = net(to_nchw(crop))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.input).stem
    save_image(crop, out / f"{name}_roi.png")
    save_image(to_image(y_crop), out / f"{name}_roi_sesr.png")
    print(
        f"roi: x0={box.x0} y0={box.y0} x1={box.x1} y1={box.y1} "
        f"score={box.score:.3f} -> {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    manifest = _load_manifest_dir(Path(args.data))
    report = tr.validate(ckpt, manifest)
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"samples: {report['count']}")
    for tier, label in (("hr", "HR output vs Y"), ("lr", "enhanced vs E")):
        row = report[tier]
        print(
            f"{label}: PSNR {format_mean_std(row['psnr'])} dB | "
            f"SSIM {format_mean_std(row['ssim'])} | "
            f"UIQM {format_mean_std(row['uiqm'])}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

def benchmark_variants(
    base_config: ModelConfig,
    size_wh: tuple[int, int] = (160, 120),
    runs: int = 5,
    warmup: int = 1,
    variants: tuple[str, ...] = ("1d", "2d"),
    modes: tuple[str, ...] = ("full", "enhance_only"),
    seed: int = 0,
) -> dict:
    """Median/mean per-frame forward latency for each (variant, mode) cell,
    plus parameter counts.

    Single-threaded, and the modes are sampled interleaved within each
    iteration so slow clock drift cancels out of the comparison.
    """
    torch.set_num_threads(1)
    w, h = size_wh
    x = torch.rand(1, 3, h, w, generator=torch.Generator().manual_seed(seed))
    report: dict = {"input_size": f"{w}x{h}", "runs": runs, "cells": {}}
    for variant in variants:
        config = dataclasses.replace(base_config, fenet_variant=variant)
        net = build_model(config, init_params(config)).eval()
        cell: dict = {"params": count_params(config)}
        fns = {
            mode: net.forward_enhance_only if mode == "enhance_only" else net.forward
            for mode in modes
        }
        samples: dict[str, list[float]] = {mode: [] for mode in modes}
        with torch.no_grad():
            for _ in range(warmup):
                for fn in fns.values():
                    fn(x)
            for _ in range(runs):
                for mode, fn in fns.items():
                    t0 = time.perf_counter()
                    fn(x)
                    samples[mode].append((time.perf_counter() - t0) * 1000.0)
        for mode in modes:
            cell[mode] = {
                "median_ms": statistics.median(samples[mode]),
                "mean_ms": statistics.fmean(samples[mode]),
            }
        report["cells"][variant] = cell
    return report


def cmd_benchmark(args) -> int:
    if args.ckpt:
        base_config = load_checkpoint(args.ckpt).config
    else:
        base_config = ModelConfig(scale=args.scale)
    variants = ("1d", "2d") if args.variant == "both" else (args.variant,)
    modes = (
        ("full", "enhance_only")
        if args.mode == "both"
        else (args.mode.replace("-", "_"),)
    )
    report = benchmark_variants(
        base_config,
        size_wh=args.size,
        runs=args.runs,
        warmup=args.warmup,
        variants=variants,
        modes=modes,
    )
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"input {report['input_size']}, {report['runs']} runs per cell")
    for variant, cell in report["cells"].items():
        parts = [f"FENet-{variant}: {cell['params']:,} params"]
        for mode in ("full", "enhance_only"):
            if mode in cell:
                stats = cell[mode]
                fps = 1000.0 / stats["median_ms"] if stats["median_ms"] > 0 else float("inf")
                parts.append(
                    f"{mode.replace('_', '-')} {stats['median_ms']:.1f} ms ({fps:.2f} FPS)"
                )
        print("  ".join(parts))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sesr",
        description="Simultaneous enhancement and super-resolution toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a paired dataset from HR images")
    p.add_argument("--input", required=True, help="directory of HR images (or with hr/, saliency/)")
    p.add_argument("--output", required=True)
    p.add_argument("--set", choices=["U", "F", "O"], default="U")
    p.add_argument("--scale", type=int, choices=[2, 3, 4], default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--synthetic-distort", action="store_true",
                   help="apply the parametric optical distortion before degradation")
    p.add_argument("--kernel-size", type=int, default=7)
    p.add_argument("--noise-level", type=float, default=0.2)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="optimize a model on a prepared dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--config", default=None, help="flat JSON key/value file")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a checkpoint on image files")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--mode", choices=["sesr", "enhance", "saliency"], default="sesr")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-enhanced", action="store_true",
                   help="in sesr mode, also write the LR enhanced image")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("roi", help="select the salient region and super-resolve it")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_roi)

    p = sub.add_parser("evaluate", help="metric report over a prepared dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="latency/parameter matrix of design choices")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--variant", choices=["1d", "2d", "both"], default="both")
    p.add_argument("--mode", choices=["full", "enhance-only", "both"], default="both")
    p.add_argument("--runs", type=_positive_int, required=True)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--size", type=_parse_size, default=(160, 120))
    p.add_argument("--scale", type=int, choices=[2, 3, 4], default=2)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
