"""Generative network for simultaneous enhancement and super-resolution.

The backbone (FENet) is a two-stage residual-in-residual stack of residual
dense blocks. Its feature maps feed three heads: a saliency head (two
convs, sigmoid), an enhancement head (one conv, sigmoid) producing the
LR-resolution output, and the super-resolution branch (conv, transposed
convolutions per scale, conv, sigmoid) producing the HR output.

All tensors are NCHW float32; images enter via `to_nchw` / leave via
`to_image`. Output spatial dims are exactly scale * input dims (3x uses a
stride-3 transposed conv on ceil-divided inputs, so training center-crops
to the ground truth, see `center_crop_nchw`).

Parameters are immutable during inference: any number of concurrent
forward passes may share one loaded checkpoint.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import FormatError
from .imagecore import MIN_DIM

CHECKPOINT_MAGIC = b"SESRCKPT"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {torch.float32: "<f4", torch.int64: "<i8"}
_CODE_DTYPES = {"<f4": (np.dtype("<f4"), torch.float32), "<i8": (np.dtype("<i8"), torch.int64)}


@dataclass
class ModelConfig:
    scale: int = 2
    fenet_variant: str = "2d"  # "1d" or "2d"
    rdb_stage1_count: int = 8
    rdb_stage2_count: int = 4
    rdb_growth: int = 64
    fenet_out_channels: int = 32
    head_channels: int = 64
    use_aan: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.fenet_variant not in ("1d", "2d"):
            raise ValueError(f"fenet_variant must be '1d' or '2d', got {self.fenet_variant!r}")
        if min(self.rdb_stage1_count, self.rdb_stage2_count) < 1:
            raise ValueError("RDB counts must be >= 1")
        if min(self.rdb_growth, self.fenet_out_channels, self.head_channels) < 1:
            raise ValueError("channel widths must be >= 1")


@dataclass
class Checkpoint:
    config: ModelConfig
    weights: dict[str, torch.Tensor]
    optimizer_state: dict | None = None
    step: int = 0
    format_version: int = CHECKPOINT_VERSION


class ResidualDenseBlock(nn.Module):
    """Three densely-connected conv(+BN+ReLU) layers fused by a 1x1 conv,
    with a local residual connection back to the block input."""

    def __init__(self, channels: int, growth: int, kernel_size: int):
        super().__init__()
        pad = kernel_size // 2
        self.layers = nn.ModuleList()
        width = channels
        for _ in range(3):
            self.layers.append(
                nn.Sequential(
                    nn.Conv2d(width, growth, kernel_size, padding=pad),
                    nn.BatchNorm2d(growth),
                    nn.ReLU(inplace=True),
                )
            )
            width += growth
        self.fusion = nn.Conv2d(width, channels, kernel_size=1)

    def forward(self, x):
        feats = x
        for layer in self.layers:
            feats = torch.cat([feats, layer(feats)], dim=1)
        return x + self.fusion(feats)


class FENet(nn.Module):
    """Feature extraction network; "2d" runs parallel 3x3 and 5x5 RDB
    branches, "1d" a single 3x3 branch, then a shared 3x3 RDB stage."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        g = config.rdb_growth
        self.lift_a = nn.Sequential(nn.Conv2d(3, g, 3, padding=1), nn.ReLU(inplace=True))
        self.branch_a = nn.Sequential(
            *[ResidualDenseBlock(g, g, 3) for _ in range(config.rdb_stage1_count)]
        )
        self.two_branch = config.fenet_variant == "2d"
        if self.two_branch:
            self.lift_b = nn.Sequential(nn.Conv2d(3, g, 5, padding=2), nn.ReLU(inplace=True))
            self.branch_b = nn.Sequential(
                *[ResidualDenseBlock(g, g, 5) for _ in range(config.rdb_stage1_count)]
            )
        merged = 2 * g if self.two_branch else g
        self.reduce = nn.Sequential(nn.Conv2d(merged, g, 3, padding=1), nn.ReLU(inplace=True))
        self.stage2 = nn.Sequential(
            *[ResidualDenseBlock(g, g, 3) for _ in range(config.rdb_stage2_count)]
        )
        self.out_conv = nn.Sequential(
            nn.Conv2d(g, config.fenet_out_channels, 3, padding=1), nn.ReLU(inplace=True)
        )

    def forward(self, x):
        a = self.branch_a(self.lift_a(x))
        merged = torch.cat([a, self.branch_b(self.lift_b(x))], dim=1) if self.two_branch else a
        return self.out_conv(self.stage2(self.reduce(merged)))


class AAN(nn.Module):
    """Saliency head: two 3x3 convs onto a single sigmoid channel."""

    def __init__(self, in_channels: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, 1, 3, padding=1),
            nn.Sigmoid(),
        )

    def forward(self, features):
        return self.net(features)


def _upsample_stack(channels: int, scale: int) -> nn.Sequential:
    if scale == 2:
        steps = [(4, 2, 1)]
    elif scale == 4:
        steps = [(4, 2, 1), (4, 2, 1)]
    else:  # exact 3x in one stride-3 layer
        steps = [(3, 3, 0)]
    layers: list[nn.Module] = []
    for k, s, p in steps:
        layers.append(nn.ConvTranspose2d(channels, channels, k, stride=s, padding=p))
        layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


class SESRNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.fenet = FENet(config)
        self.aan = AAN(config.fenet_out_channels, config.head_channels) if config.use_aan else None
        self.enhance_head = nn.Sequential(
            nn.Conv2d(config.fenet_out_channels, 3, 3, padding=1), nn.Sigmoid()
        )
        h = config.head_channels
        self.sesr_conv = nn.Sequential(
            nn.Conv2d(config.fenet_out_channels, h, 3, padding=1), nn.ReLU(inplace=True)
        )
        self.upsample = _upsample_stack(h, config.scale)
        self.sesr_head = nn.Sequential(nn.Conv2d(h, 3, 3, padding=1), nn.Sigmoid())

    def _shared(self, x):
        if x.shape[-2] < MIN_DIM or x.shape[-1] < MIN_DIM:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} below the {MIN_DIM}x{MIN_DIM} minimum"
            )
        features = self.fenet(x)
        saliency = self.aan(features) if self.aan is not None else None
        enhanced = self.enhance_head(features)
        return features, saliency, enhanced

    def forward(self, x):
        features, saliency, enhanced = self._shared(x)
        hr = self.sesr_head(self.upsample(self.sesr_conv(features)))
        return saliency, enhanced, hr

    def forward_enhance_only(self, x):
        _, saliency, enhanced = self._shared(x)
        return saliency, enhanced


def init_params(config: ModelConfig) -> dict[str, torch.Tensor]:
    """Seed-deterministic initial state: fan-in-scaled normal conv weights,
    zero biases, identity normalization layers."""
    net = SESRNet(config)
    gen = torch.Generator().manual_seed(config.seed)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if p.ndim >= 2:
                fan_in = p.shape[1] * math.prod(p.shape[2:])
                p.copy_(torch.randn(p.shape, generator=gen) * math.sqrt(2.0 / fan_in))
            elif name.endswith("bias"):
                p.zero_()
            else:
                p.fill_(1.0)
    return {k: v.detach().clone() for k, v in net.state_dict().items()}


def build_model(config: ModelConfig, params: dict[str, torch.Tensor] | None = None) -> SESRNet:
    net = SESRNet(config)
    net.load_state_dict(params if params is not None else init_params(config))
    return net


def count_params(config: ModelConfig) -> int:
    return sum(p.numel() for p in SESRNet(config).parameters())


def center_crop_nchw(t: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Center crop the trailing spatial dims (used to align 3x outputs that
    were produced from ceil-divided inputs with the ground truth)."""
    h, w = t.shape[-2], t.shape[-1]
    if h < height or w < width:
        raise ValueError(f"cannot crop {h}x{w} to {height}x{width}")
    top = (h - height) // 2
    left = (w - width) // 2
    return t[..., top : top + height, left : left + width]


def to_nchw(img: np.ndarray) -> torch.Tensor:
    """(H, W, 3) or (H, W) numpy image -> (1, C, H, W) float32 tensor."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def to_image(t: torch.Tensor) -> np.ndarray:
    """(1, C, H, W) or (C, H, W) tensor -> (H, W, C) or (H, W) float32 array."""
    arr = t.detach().cpu().numpy()
    if arr.ndim == 4:
        arr = arr[0]
    out = np.ascontiguousarray(arr.transpose(1, 2, 0)).astype(np.float32)
    return out[..., 0] if out.shape[2] == 1 else out


# ---------------------------------------------------------------------------
# Checkpoint container: JSON header + raw little-endian tensor payload.
# ---------------------------------------------------------------------------

def _tensor_entries(ckpt: Checkpoint) -> list[tuple[str, str, torch.Tensor]]:
    """(group, name, tensor) triples in a canonical, sorted order."""
    entries = [("weights", k, ckpt.weights[k]) for k in sorted(ckpt.weights)]
    if ckpt.optimizer_state is not None:
        for group in ("m", "v"):
            tensors = ckpt.optimizer_state[group]
            entries += [(f"adam_{group}", k, tensors[k]) for k in sorted(tensors)]
    return entries


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    entries = _tensor_entries(ckpt)
    header = {
        "format_version": ckpt.format_version,
        "config": asdict(ckpt.config),
        "step": ckpt.step,
        "optimizer_step": None
        if ckpt.optimizer_state is None
        else ckpt.optimizer_state["step"],
        "tensors": [
            {
                "group": group,
                "name": name,
                "shape": list(t.shape),
                "dtype": _DTYPE_CODES[t.dtype],
            }
            for group, name, t in entries
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, _, t in entries:
            code = _DTYPE_CODES[t.dtype]
            fh.write(t.detach().cpu().contiguous().numpy().astype(_CODE_DTYPES[code][0]).tobytes())


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    header_len = int.from_bytes(data[offset : offset + 8], "little")
    offset += 8
    header = json.loads(data[offset : offset + header_len])
    offset += header_len
    if header["format_version"] != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: format version {header['format_version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    weights: dict[str, torch.Tensor] = {}
    adam = {"m": {}, "v": {}}
    for entry in header["tensors"]:
        np_dtype, torch_dtype = _CODE_DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        raw = np.frombuffer(data, dtype=np_dtype, count=count, offset=offset).copy()
        offset += count * np_dtype.itemsize
        tensor = torch.from_numpy(raw.reshape(entry["shape"])).to(torch_dtype)
        if entry["group"] == "weights":
            weights[entry["name"]] = tensor
        else:
            adam[entry["group"].removeprefix("adam_")][entry["name"]] = tensor
    optimizer_state = None
    if header["optimizer_step"] is not None:
        optimizer_state = {"step": header["optimizer_step"], "m": adam["m"], "v": adam["v"]}
    return Checkpoint(
        config=ModelConfig(**header["config"]),
        weights=weights,
        optimizer_state=optimizer_state,
        step=header["step"],
        format_version=header["format_version"],
    )
