"""End-to-end optimization: Adam updates under the combined objective,
with validation metrics, checkpointing, and training-curve logging.

Training is deterministic in reference mode (single-threaded math, data
order a pure function of (seed, epoch), seeded init, no dropout), so a
run resumed from any checkpoint continues bit-identically. Exactly one
training process owns the parameters; validation builds its own
inference-mode copy.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import metrics
from .dataset import Manifest, batch_indices, load_sample
from .errors import NumericError
from .losses import LossWeights, make_extractor, total_objective
from .model import (
    Checkpoint,
    ModelConfig,
    build_model,
    center_crop_nchw,
    save_checkpoint,
    to_image,
    to_nchw,
)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 2
    max_epochs: int = 26
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    checkpoint_every: int = 0  # steps; 0 = final checkpoint only
    validate_every: int = 0  # steps; 0 = never
    content_extractor: str = "random"
    grad_clip: float = 0.0  # global-norm guard; 0 = off
    reference_mode: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]

    @classmethod
    def fresh(cls, params: dict[str, torch.Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: torch.zeros_like(p) for k, p in params.items()},
            v={k: torch.zeros_like(p) for k, p in params.items()},
        )


class TrainLog:
    """Per-step loss records plus validation snapshots, NDJSON on disk."""

    def __init__(self, records: list[dict] | None = None):
        self.records = records or []

    def append(self, record: dict) -> None:
        self.records.append(record)

    def step_totals(self) -> list[float]:
        return [r["losses"]["total"] for r in self.records if r["kind"] == "step"]

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def read(cls, path: str | os.PathLike) -> "TrainLog":
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor | None],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, torch.Tensor], AdamState]:
    """One bias-corrected Adam update, in place. Parameters without a
    gradient (detached heads) are left untouched."""
    for name, g in grads.items():
        if g is not None and not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = config.adam_beta1, config.adam_beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = state.m[name]
            v = state.v[name]
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            m_hat = m / bias1
            v_hat = v / bias2
            p.sub_(config.learning_rate * m_hat / (torch.sqrt(v_hat) + config.adam_eps))
    return params, state


def _stack_batch(samples) -> tuple[torch.Tensor, torch.Tensor | None, torch.Tensor, torch.Tensor]:
    dims = {s.x.shape for s in samples}
    if len(dims) != 1:
        raise ValueError(f"batch mixes input dims: {sorted(dims)}")
    x = torch.cat([to_nchw(s.x) for s in samples])
    e = torch.cat([to_nchw(s.e) for s in samples])
    y = torch.cat([to_nchw(s.y) for s in samples])
    s_maps = None
    if all(s.s is not None for s in samples):
        s_maps = torch.cat([to_nchw(s.s) for s in samples])
    return x, s_maps, e, y


def _snapshot(net, model_config: ModelConfig, state: AdamState, step: int) -> Checkpoint:
    return Checkpoint(
        config=model_config,
        weights={k: v.detach().clone() for k, v in net.state_dict().items()},
        optimizer_state={
            "step": state.step,
            "m": {k: v.clone() for k, v in state.m.items()},
            "v": {k: v.clone() for k, v in state.v.items()},
        },
        step=step,
    )


def train(
    train_manifest: Manifest,
    val_manifest: Manifest | None,
    config: TrainConfig,
    out_dir: str | os.PathLike,
    resume_from: str | os.PathLike | None = None,
) -> tuple[Checkpoint, TrainLog]:
    """Optimize the model over the manifest; returns the final checkpoint
    and the per-step log. Checkpoints land in out_dir (final.ckpt plus
    step_NNNNNN.ckpt per the schedule); the log in train_log.ndjson.

    On a non-finite loss or gradient the last good state is written to
    aborted.ckpt and NumericError is raised. With resume_from, the model
    architecture comes from the checkpoint, data iteration fast-forwards
    to the checkpoint step, and (under the same TrainConfig) the
    continuation is bit-identical to an uninterrupted run in reference
    mode.
    """
    if len(train_manifest) == 0:
        raise ValueError("empty training manifest")
    if len(train_manifest) < config.batch_size:
        raise ValueError(
            f"{len(train_manifest)} samples cannot fill a batch of {config.batch_size}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.reference_mode:
        torch.set_num_threads(1)

    if resume_from is not None:
        from .model import load_checkpoint

        ckpt = load_checkpoint(resume_from)
        model_config = ckpt.config
        net = build_model(model_config, ckpt.weights)
        params = dict(net.named_parameters())
        if ckpt.optimizer_state is None:
            raise ValueError(f"{resume_from}: checkpoint has no optimizer state to resume")
        state = AdamState(
            step=ckpt.optimizer_state["step"],
            m=dict(ckpt.optimizer_state["m"]),
            v=dict(ckpt.optimizer_state["v"]),
        )
        start_step = ckpt.step
    else:
        model_config = config.model
        net = build_model(model_config)
        params = dict(net.named_parameters())
        state = AdamState.fresh(params)
        start_step = 0

    net.train()
    extractor = make_extractor(config.content_extractor, seed=config.seed)
    log = TrainLog()
    step = 0
    saliency_dropped_logged = False

    def persist(name: str, at_step: int) -> Checkpoint:
        snapshot = _snapshot(net, model_config, state, at_step)
        save_checkpoint(snapshot, out / name)
        return snapshot

    for epoch in range(config.max_epochs):
        for idx_batch in batch_indices(
            len(train_manifest), config.batch_size, config.seed, epoch
        ):
            if step < start_step:
                step += 1
                continue
            samples = [load_sample(train_manifest, train_manifest.entries[i]) for i in idx_batch]
            x, s, e, y = _stack_batch(samples)
            if s is None and not saliency_dropped_logged:
                log.append({"kind": "note", "step": step, "message": "no saliency maps; saliency and contrast terms dropped"})
                saliency_dropped_logged = True
            t0 = time.perf_counter()
            s_hat, e_hat, y_hat = net(x)
            y_hat = center_crop_nchw(y_hat, y.shape[-2], y.shape[-1])
            breakdown = total_objective(
                (s_hat, e_hat, y_hat), (s, e, y), config.loss_weights, extractor
            )
            if not torch.isfinite(breakdown.total):
                persist("aborted.ckpt", step)
                raise NumericError(f"non-finite loss at step {step}; last good state saved")
            for p in params.values():
                p.grad = None
            breakdown.total.backward()
            grads = {k: p.grad for k, p in params.items()}
            if config.grad_clip > 0:
                norm = torch.sqrt(
                    sum((g * g).sum() for g in grads.values() if g is not None)
                )
                if norm > config.grad_clip:
                    for g in grads.values():
                        if g is not None:
                            g.mul_(config.grad_clip / norm)
            try:
                adam_step(params, grads, state, config)
            except NumericError:
                persist("aborted.ckpt", step)
                raise
            step += 1
            log.append(
                {
                    "kind": "step",
                    "step": step,
                    "epoch": epoch,
                    "wall_ms": (time.perf_counter() - t0) * 1000.0,
                    "losses": breakdown.as_floats(),
                }
            )
            if config.checkpoint_every > 0 and step % config.checkpoint_every == 0:
                persist(f"step_{step:06d}.ckpt", step)
            if (
                config.validate_every > 0
                and val_manifest is not None
                and len(val_manifest) > 0
                and step % config.validate_every == 0
            ):
                net.eval()
                report = validate(_snapshot(net, model_config, state, step), val_manifest)
                net.train()
                log.append({"kind": "validation", "step": step, "metrics": report})

    final = persist("final.ckpt", step)
    log.write(out / "train_log.ndjson")
    return final, log


def mean_std(values) -> dict[str, float]:
    """Population mean and sqrt(variance), the reporting convention.

    An infinite mean (identical images under PSNR) yields a NaN spread.
    """
    arr = np.asarray(list(values), dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return {"mean": float(arr.mean()), "std": float(arr.std())}


def format_mean_std(agg: dict[str, float]) -> str:
    return f"{agg['mean']:.4g} ± {agg['std']:.3g}"


def validate(checkpoint: Checkpoint, manifest: Manifest, forward_fn=None) -> dict:
    """Mean +- sqrt(variance) of PSNR/SSIM/UIQM over the set, for the HR
    output against Y and the enhanced LR output against E.

    forward_fn overrides the model (testing seam): it maps an input batch
    tensor to (saliency, enhanced, hr) exactly like the network.
    """
    if len(manifest) == 0:
        raise ValueError("empty validation manifest")
    if forward_fn is None:
        net = build_model(checkpoint.config, checkpoint.weights).eval()

        def forward_fn(t):
            with torch.no_grad():
                return net(t)

    rows: dict[str, list[float]] = {
        "hr_psnr": [], "hr_ssim": [], "hr_uiqm": [],
        "lr_psnr": [], "lr_ssim": [], "lr_uiqm": [],
    }
    for entry in manifest.entries:
        if entry["scale"] != checkpoint.config.scale:
            raise ValueError(
                f"{entry['basename']}: manifest scale {entry['scale']} does not "
                f"match checkpoint scale {checkpoint.config.scale}"
            )
        sample = load_sample(manifest, entry)
        _, e_hat, y_hat = forward_fn(to_nchw(sample.x))
        y_img = to_image(center_crop_nchw(y_hat, sample.y.shape[0], sample.y.shape[1]))
        e_img = to_image(e_hat)
        rows["hr_psnr"].append(metrics.psnr(y_img, sample.y))
        rows["hr_ssim"].append(metrics.ssim(y_img, sample.y))
        rows["hr_uiqm"].append(metrics.uiqm(y_img))
        rows["lr_psnr"].append(metrics.psnr(e_img, sample.e))
        rows["lr_ssim"].append(metrics.ssim(e_img, sample.e))
        rows["lr_uiqm"].append(metrics.uiqm(e_img))
    return {
        "count": len(manifest),
        "hr": {k.removeprefix("hr_"): mean_std(v) for k, v in rows.items() if k.startswith("hr_")},
        "lr": {k.removeprefix("lr_"): mean_std(v) for k, v in rows.items() if k.startswith("lr_")},
    }


def smoothed_endpoints(totals: list[float], window: int = 25) -> tuple[float, float]:
    """Mean total loss over the first and last `window` steps."""
    if not totals:
        raise ValueError("no step records")
    w = min(window, len(totals))
    return float(np.mean(totals[:w])), float(np.mean(totals[-w:]))
