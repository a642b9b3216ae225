"""Paired training data: degradation pipeline, on-disk layout, manifest,
and deterministic batch serving.

Directory layout (all images PNG, matched by basename):

    root/hr/<name>.png        clean high-resolution ground truth (Y)
    root/lrd/<name>.png       degraded low-resolution input (X)
    root/lr/<name>.png        clean low-resolution ground truth (E), optional
    root/saliency/<name>.png  foreground annotation at LR dims (S), optional

When lr/ is absent, E is derived on load by bicubic down-sampling of Y.
The manifest is a JSON array of {basename, scale, paths, sha256} entries,
conventionally stored at root/manifest.json.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import ValidationError
from .imagecore import (
    bicubic_resize,
    downsample_by_scale,
    gaussian_blur,
    load_image,
    load_mask,
)

SCALES = (2, 3, 4)


@dataclass
class DegradeSpec:
    """Optical/spatial degradation recipe for one sample.

    set_id selects the blur/down-sample order: "U" blurs first, "O"
    down-samples first, "F" flips a fair per-sample coin drawn from seed.
    """

    set_id: str
    scale: int
    kernel_size: int = 7
    sigma: float | None = None
    noise_level: float = 0.2
    seed: int = 0


@dataclass
class PairedSample:
    """One training record: degraded input plus its three supervision targets."""

    x: np.ndarray
    s: np.ndarray | None
    e: np.ndarray
    y: np.ndarray
    scale: int


@dataclass
class Manifest:
    root: Path
    entries: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def degrade(hr_distorted: np.ndarray, spec: DegradeSpec) -> np.ndarray:
    """Produce the low-resolution degraded input from a (distorted) HR image."""
    if spec.set_id not in ("U", "F", "O"):
        raise ValueError(f"set_id must be U, F or O, got {spec.set_id!r}")
    if spec.scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {spec.scale}")
    rng = np.random.default_rng(spec.seed)
    noise_seed = int(rng.integers(0, 2**31))
    if spec.set_id == "U":
        blur_first = True
    elif spec.set_id == "O":
        blur_first = False
    else:
        blur_first = bool(rng.random() < 0.5)

    def blur(img):
        return gaussian_blur(
            img,
            kernel_size=spec.kernel_size,
            sigma=spec.sigma,
            noise_level=spec.noise_level,
            rng_seed=noise_seed,
        )

    if blur_first:
        return downsample_by_scale(blur(hr_distorted), spec.scale)
    return blur(downsample_by_scale(hr_distorted, spec.scale))


def synth_distort(hr_clean: np.ndarray, seed: int) -> np.ndarray:
    """Parametric underwater-style optical degradation (stand-in for a
    learned style transfer).

    Red is attenuated hardest (gain 0.35-0.6 vs 0.65-0.95 for green/blue),
    a red-free haze veil of strength 0.10-0.35 is blended in, and the
    green-blue axis is slightly desaturated (0.05-0.30). Every factor on
    the red channel is multiplicative and below one, so the red mean never
    increases. Deterministic given seed.
    """
    rng = np.random.default_rng(seed)
    gain_r = rng.uniform(0.35, 0.60)
    gain_g = rng.uniform(0.75, 0.95)
    gain_b = rng.uniform(0.65, 0.90)
    veil = rng.uniform(0.10, 0.35)
    veil_g = rng.uniform(0.50, 0.70)
    veil_b = rng.uniform(0.55, 0.80)
    desat = rng.uniform(0.05, 0.30)

    data = np.asarray(hr_clean, dtype=np.float64)
    r = data[..., 0] * gain_r * (1.0 - veil)
    g1 = data[..., 1] * gain_g
    b1 = data[..., 2] * gain_b
    mid = (g1 + b1) / 2.0
    g = (1.0 - veil) * ((1.0 - desat) * g1 + desat * mid) + veil * veil_g
    b = (1.0 - veil) * ((1.0 - desat) * b1 + desat * mid) + veil * veil_b
    out = np.stack([r, g, b], axis=-1)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _png_dims(path: Path) -> tuple[int, int]:
    with Image.open(path) as im:
        w, h = im.size
    return h, w


def _infer_scale(hr_dims: tuple[int, int], lrd_dims: tuple[int, int]) -> int | None:
    for s in SCALES:
        if (math.ceil(hr_dims[0] / s), math.ceil(hr_dims[1] / s)) == lrd_dims:
            return s
    return None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_manifest(root_dir: str | os.PathLike) -> Manifest:
    """Scan the directory layout, validate pairing and dimensions, and
    return the manifest. Raises ValidationError naming the offending file."""
    root = Path(root_dir)
    hr_dir = root / "hr"
    lrd_dir = root / "lrd"
    if not hr_dir.is_dir() or not lrd_dir.is_dir():
        raise ValidationError(f"{root}: expected hr/ and lrd/ subdirectories")

    def listing(d: Path) -> dict[str, Path]:
        return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() == ".png"}

    hr_files = listing(hr_dir)
    lrd_files = listing(lrd_dir)
    lr_files = listing(root / "lr") if (root / "lr").is_dir() else {}
    sal_files = listing(root / "saliency") if (root / "saliency").is_dir() else {}

    if set(hr_files) != set(lrd_files):
        odd = sorted(set(hr_files).symmetric_difference(lrd_files))
        raise ValidationError(f"{root}: unpaired basenames between hr/ and lrd/: {odd}")

    entries = []
    for name in sorted(hr_files):
        hr_dims = _png_dims(hr_files[name])
        lrd_dims = _png_dims(lrd_files[name])
        scale = _infer_scale(hr_dims, lrd_dims)
        if scale is None:
            raise ValidationError(
                f"{lrd_files[name]}: dims {lrd_dims} do not match any scale in "
                f"{SCALES} for HR dims {hr_dims}"
            )
        paths = {"hr": f"hr/{name}.png", "lrd": f"lrd/{name}.png"}
        if name in lr_files:
            if _png_dims(lr_files[name]) != lrd_dims:
                raise ValidationError(f"{lr_files[name]}: dims differ from lrd dims {lrd_dims}")
            paths["lr"] = f"lr/{name}.png"
        if name in sal_files:
            if _png_dims(sal_files[name]) != lrd_dims:
                raise ValidationError(f"{sal_files[name]}: dims differ from lrd dims {lrd_dims}")
            paths["saliency"] = f"saliency/{name}.png"
        entries.append(
            {
                "basename": name,
                "scale": scale,
                "paths": paths,
                "sha256": {key: _sha256(root / rel) for key, rel in paths.items()},
            }
        )
    return Manifest(root=root, entries=entries)


def save_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(manifest.entries, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | os.PathLike) -> Manifest:
    p = Path(path)
    return Manifest(root=p.parent, entries=json.loads(p.read_text()))


def load_sample(manifest: Manifest, entry: dict) -> PairedSample:
    """Materialize one manifest entry; E falls back to down-sampled Y."""
    root = manifest.root
    paths = entry["paths"]
    y = load_image(root / paths["hr"])
    x = load_image(root / paths["lrd"])
    e = (
        load_image(root / paths["lr"])
        if "lr" in paths
        else downsample_by_scale(y, entry["scale"])
    )
    s = load_mask(root / paths["saliency"]) if "saliency" in paths else None
    return PairedSample(x=x, s=s, e=e, y=y, scale=entry["scale"])


def batch_indices(
    n_samples: int, batch_size: int, seed: int, epoch: int
) -> list[list[int]]:
    """Epoch-deterministic shuffled index batches; the incomplete trailing
    batch is dropped."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if n_samples == 0:
        raise ValueError("empty manifest")
    perm = np.random.default_rng([seed, epoch]).permutation(n_samples)
    n_batches = n_samples // batch_size
    return [perm[i * batch_size : (i + 1) * batch_size].tolist() for i in range(n_batches)]


def batches(
    manifest: Manifest, batch_size: int, seed: int, epoch: int
) -> Iterator[list[PairedSample]]:
    """Stream fully-loaded sample batches in the (seed, epoch) order."""
    for idx_batch in batch_indices(len(manifest), batch_size, seed, epoch):
        yield [load_sample(manifest, manifest.entries[i]) for i in idx_batch]


# ---------------------------------------------------------------------------
# Synthetic scenes for desk-scale corpora (tests, demos, toy training).
# ---------------------------------------------------------------------------

def synth_scene(seed: int, height: int = 64, width: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Procedural scene with a bright warm foreground object on a darker
    textured background. Returns (image, foreground mask), both HxW(-x3).
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    base = rng.uniform(0.08, 0.22)
    tilt = rng.uniform(0.05, 0.15)
    background = base + tilt * (yy / height)
    img = np.stack(
        [
            background * rng.uniform(0.6, 0.9),
            background * rng.uniform(0.9, 1.1),
            background * rng.uniform(1.0, 1.3),
        ],
        axis=-1,
    )
    # A few dim rocks for texture.
    for _ in range(4):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry, rx = rng.uniform(3, height / 5), rng.uniform(3, width / 5)
        rock = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        img[rock] = rng.uniform(0.15, 0.4, size=3)

    # Bright warm foreground ellipse near the center.
    cy = height / 2 + rng.uniform(-height / 8, height / 8)
    cx = width / 2 + rng.uniform(-width / 8, width / 8)
    ry = rng.uniform(height / 6, height / 4)
    rx = rng.uniform(width / 6, width / 4)
    mask = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0).astype(np.float64)
    fg_color = np.array(
        [rng.uniform(0.75, 0.95), rng.uniform(0.45, 0.7), rng.uniform(0.2, 0.45)]
    )
    stripes = 0.12 * np.sin(xx / rng.uniform(2.0, 5.0))
    fg = np.clip(fg_color[None, None, :] + stripes[..., None], 0.0, 1.0)
    img = np.where(mask[..., None] > 0, fg, img)
    # Fine luminance grain everywhere, like sand/particulate texture.
    img = img + rng.normal(0.0, 0.035, size=(height, width, 1))
    return np.clip(img, 0.0, 1.0).astype(np.float32), mask.astype(np.float32)


def prepare_sample_seed(seed: int, name: str) -> int:
    """Stable per-file sub-seed for the preparation pipeline."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def build_toy_dataset(
    root: str | os.PathLike,
    n_samples: int = 16,
    hr_size: tuple[int, int] = (64, 64),
    scale: int = 2,
    set_id: str = "U",
    seed: int = 0,
    with_saliency: bool = True,
    distort: bool = True,
) -> Manifest:
    """Write a complete synthetic paired dataset and its manifest."""
    from .imagecore import save_image, save_mask

    root = Path(root)
    for sub in ("hr", "lr", "lrd") + (("saliency",) if with_saliency else ()):
        (root / sub).mkdir(parents=True, exist_ok=True)
    h, w = hr_size
    for i in range(n_samples):
        name = f"scene_{i:03d}"
        sub_seed = prepare_sample_seed(seed, name)
        img, mask = synth_scene(sub_seed, h, w)
        distorted = synth_distort(img, sub_seed) if distort else img
        x = degrade(distorted, DegradeSpec(set_id=set_id, scale=scale, seed=sub_seed))
        e = downsample_by_scale(img, scale)
        save_image(img, root / "hr" / f"{name}.png")
        save_image(e, root / "lr" / f"{name}.png")
        save_image(x, root / "lrd" / f"{name}.png")
        if with_saliency:
            lr_mask = bicubic_resize(mask, x.shape[0], x.shape[1])
            save_mask(lr_mask, root / "saliency" / f"{name}.png")
    manifest = build_manifest(root)
    save_manifest(manifest, root / "manifest.json")
    return manifest
