"""Deterministic image primitives shared by the whole pipeline.

Conventions:
- images are numpy float32 arrays in [0, 1], shape (H, W, 3), RGB order;
- single-channel maps (saliency, gradients) are (H, W);
- every operation is a pure function of its arguments (plus an explicit
  seed where randomness is involved).
"""

from __future__ import annotations

import math
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError

MIN_DIM = 8

# Rec.601 luminance weights.
LUMA_R, LUMA_G, LUMA_B = 0.299, 0.587, 0.114

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def require_image(img: np.ndarray, min_hw: int = 1) -> None:
    """Validate the (H, W, 3) float-in-[0,1] contract."""
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {getattr(img, 'shape', None)}")
    if img.shape[0] < min_hw or img.shape[1] < min_hw:
        raise ValueError(f"image {img.shape[0]}x{img.shape[1]} smaller than minimum {min_hw}")
    if not np.issubdtype(img.dtype, np.floating):
        raise ValueError(f"expected float image, got dtype {img.dtype}")


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Decode a PNG or JPEG file to a float32 RGB array in [0, 1].

    8-bit value v maps to v / 255 exactly.
    """
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise FormatError(f"{path}: unsupported format {im.format!r} (PNG/JPEG only)")
            rgb = im.convert("RGB")
            data = np.asarray(rgb, dtype=np.float32) / 255.0
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image ({exc})") from exc
    except OSError as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: truncated or corrupt image ({exc})") from exc
    return data


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write an image as 8-bit PNG/JPEG (by suffix; PNG when unknown).

    Quantization rounds half away from zero, so a load/save round trip
    never moves a channel by more than 1/255.
    """
    require_image(img)
    quantized = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    suffix = os.path.splitext(os.fspath(path))[1].lower()
    fmt = "JPEG" if suffix in (".jpg", ".jpeg") else "PNG"
    Image.fromarray(quantized, mode="RGB").save(path, format=fmt)


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Decode a single-channel map (e.g. a saliency annotation) to (H, W) in [0, 1]."""
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image ({exc})") from exc
    return data


def save_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    """Write a single-channel map as 8-bit grayscale PNG."""
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W) map, got shape {mask.shape}")
    quantized = np.floor(np.clip(mask, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path, format="PNG")


def _cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Cubic convolution kernel (Catmull-Rom for a = -0.5)."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    far = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _resize_axis(data: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = data.shape[axis]
    # Center-aligned mapping: output pixel i samples input coordinate
    # (i + 0.5) * in/out - 0.5.
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    moved = np.moveaxis(data, axis, 0)
    out = np.zeros((out_size,) + moved.shape[1:], dtype=np.float64)
    for tap in range(-1, 3):
        idx = np.clip(base + tap, 0, in_size - 1)
        w = _cubic_kernel(frac - tap)
        out += w.reshape((-1,) + (1,) * (moved.ndim - 1)) * moved[idx]
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Resample to (target_h, target_w) with the Catmull-Rom bicubic kernel.

    Border taps replicate the edge pixel; the result is clamped to [0, 1].
    Accepts (H, W) or (H, W, C) input.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target dims must be >= 1, got {target_h}x{target_w}")
    data = np.asarray(img, dtype=np.float64)
    out = _resize_axis(data, target_h, axis=0)
    out = _resize_axis(out, target_w, axis=1)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def downsample_by_scale(img: np.ndarray, scale: int) -> np.ndarray:
    """Bicubic down-sampling to ceil(dim / scale) per axis, scale in {2, 3, 4}."""
    if scale not in (2, 3, 4):
        raise ValueError(f"scale must be one of 2, 3, 4, got {scale}")
    h, w = img.shape[:2]
    return bicubic_resize(img, math.ceil(h / scale), math.ceil(w / scale))


def gaussian_kernel_1d(kernel_size: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps at integer offsets around zero."""
    offsets = np.arange(kernel_size, dtype=np.float64) - (kernel_size - 1) / 2.0
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    return taps / taps.sum()


def _correlate_axis(data: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(taps) - 1) // 2
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="edge")
    moved = np.moveaxis(padded, axis, 0)
    n = data.shape[axis]
    out = np.zeros((n,) + moved.shape[1:], dtype=np.float64)
    for i, t in enumerate(taps):
        out += t * moved[i : i + n]
    return np.moveaxis(out, 0, axis)


def gaussian_blur(
    img: np.ndarray,
    kernel_size: int = 7,
    sigma: float | None = None,
    noise_level: float = 0.2,
    rng_seed: int = 0,
    noise_sigma_scale: float = 0.1,
) -> np.ndarray:
    """Separable Gaussian blur with replicate borders, then additive pixel noise.

    The noise is zero-mean Gaussian with standard deviation
    noise_level * noise_sigma_scale in [0, 1] units (the default maps the
    "20% noise" knob to sigma = 0.02), drawn deterministically from
    rng_seed. sigma defaults to kernel_size / 6 so +-3 sigma spans the taps.
    """
    if kernel_size % 2 == 0 or kernel_size < 3:
        raise ValueError(f"kernel_size must be odd and >= 3, got {kernel_size}")
    if sigma is None:
        sigma = kernel_size / 6.0
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not 0.0 <= noise_level <= 1.0:
        raise ValueError(f"noise_level must be in [0, 1], got {noise_level}")
    taps = gaussian_kernel_1d(kernel_size, sigma)
    out = _correlate_axis(np.asarray(img, dtype=np.float64), taps, axis=0)
    out = _correlate_axis(out, taps, axis=1)
    if noise_level > 0.0:
        rng = np.random.default_rng(rng_seed)
        out = out + rng.normal(0.0, noise_level * noise_sigma_scale, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec.601 luminance of an (H, W, 3) image, as float64 (H, W)."""
    data = np.asarray(img, dtype=np.float64)
    return LUMA_R * data[..., 0] + LUMA_G * data[..., 1] + LUMA_B * data[..., 2]


def sobel_gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Per-pixel sqrt(Ix^2 + Iy^2) from the 3x3 Sobel stencils.

    Color input is reduced to Rec.601 luminance first; borders replicate.
    Returns a float64 (H, W) map.
    """
    gray = luminance(img) if img.ndim == 3 else np.asarray(img, dtype=np.float64)
    p = np.pad(gray, 1, mode="edge")
    h, w = gray.shape
    # Separable form: [1,2,1] smoothing along one axis, central difference
    # along the other. Differencing identical sums keeps constants at exact 0.
    smooth_y = p[0 : h, :] + 2.0 * p[1 : h + 1, :] + p[2 : h + 2, :]
    gx = smooth_y[:, 2 : w + 2] - smooth_y[:, 0:w]
    smooth_x = p[:, 0:w] + 2.0 * p[:, 1 : w + 1] + p[:, 2 : w + 2]
    gy = smooth_x[2 : h + 2, :] - smooth_x[0:h, :]
    return np.sqrt(gx * gx + gy * gy)
