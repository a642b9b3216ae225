"""Image quality metrics: full-reference (PSNR, SSIM) and no-reference
(UIQM family, CMI).

UIQM conventions follow the common underwater-benchmark practice:
intensities are rescaled to the 8-bit range internally so scores are
comparable with published values; blocks are 8x8 with partial blocks at
the right/bottom edge discarded. All block-statistic definitions are
documented on the component functions; `uiqm_coeffs` exposes the three
combination weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import gaussian_kernel_1d, luminance, sobel_gradient_magnitude

CMI_EPS = 1e-8

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

UIQM_BLOCK = 8
UIQM_ALPHA = 0.1
DEFAULT_UIQM_COEFFS = (0.0282, 0.2953, 3.5753)


@dataclass
class MetricReport:
    """One evaluation row; cmi is present only when a saliency mask exists."""

    psnr: float
    ssim: float
    uiqm: float
    uicm: float
    uism: float
    uiconm: float
    cmi: float | None = None


def _check_same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) over all pixels and channels; inf for identical inputs."""
    _check_same_dims(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Standard single-scale SSIM on Rec.601 luminance.

    11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 1;
    averaged over window positions fully inside the image.
    """
    _check_same_dims(a, b)
    h, w = a.shape[:2]
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    x = luminance(a) if a.ndim == 3 else np.asarray(a, dtype=np.float64)
    y = luminance(b) if b.ndim == 3 else np.asarray(b, dtype=np.float64)
    taps = gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)

    def windowed(img: np.ndarray) -> np.ndarray:
        # Separable weighted mean, valid positions only.
        out = np.apply_along_axis(lambda r: np.convolve(r, taps, mode="valid"), 0, img)
        return np.apply_along_axis(lambda r: np.convolve(r, taps, mode="valid"), 1, out)

    mu_x = windowed(x)
    mu_y = windowed(y)
    xx = windowed(x * x) - mu_x * mu_x
    yy = windowed(y * y) - mu_y * mu_y
    xy = windowed(x * y) - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def cmi(img: np.ndarray, mask: np.ndarray) -> float:
    """Contrast measurement index (F - B) / (F + B) under a saliency mask.

    F and B are the mean intensities of img * mask and img * (1 - mask)
    taken over all pixels and channels; a small epsilon in the denominator
    makes the all-zero case total.
    """
    if img.shape[:2] != mask.shape[:2]:
        raise ValueError(f"dimension mismatch: image {img.shape[:2]} vs mask {mask.shape[:2]}")
    data = np.asarray(img, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if data.ndim == 3:
        m = m[..., None]
    fg = float(np.mean(data * m))
    bg = float(np.mean(data * (1.0 - m)))
    return (fg - bg) / (fg + bg + CMI_EPS)


def _check_uiqm_input(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    if min(h, w) < UIQM_BLOCK:
        raise ValueError(f"image {h}x{w} smaller than one {UIQM_BLOCK}x{UIQM_BLOCK} block")
    # 8-bit range keeps scores comparable with published benchmarks.
    return np.asarray(img, dtype=np.float64) * 255.0


def _alpha_trimmed_mean(values: np.ndarray, alpha: float = UIQM_ALPHA) -> float:
    """Mean after discarding the lowest and highest floor(alpha * N) values."""
    flat = np.sort(values, axis=None)
    trim = int(alpha * flat.size)
    return float(np.mean(flat[trim : flat.size - trim]))


def uicm(img: np.ndarray) -> float:
    """Colorfulness from asymmetric alpha-trimmed statistics of the
    chrominance planes RG = r - g and YB = (r + g)/2 - b."""
    x = _check_uiqm_input(img)
    rg = x[..., 0] - x[..., 1]
    yb = (x[..., 0] + x[..., 1]) / 2.0 - x[..., 2]
    mu_rg = _alpha_trimmed_mean(rg)
    mu_yb = _alpha_trimmed_mean(yb)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    return -0.0268 * math.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * math.sqrt(var_rg + var_yb)


def _block_views(plane: np.ndarray, block: int) -> np.ndarray:
    """Full blockxblock tiles as an array of shape (k2, k1, block, block, ...)."""
    k2, k1 = plane.shape[0] // block, plane.shape[1] // block
    trimmed = plane[: k2 * block, : k1 * block]
    shape = (k2, block, k1, block) + trimmed.shape[2:]
    return trimmed.reshape(shape).swapaxes(1, 2)


def _eme(plane: np.ndarray, block: int = UIQM_BLOCK) -> float:
    """Enhancement measure: (2 / k1 k2) * sum log(max / min) over full
    blocks, where blocks with a non-positive minimum contribute zero."""
    tiles = _block_views(plane, block)
    k2, k1 = tiles.shape[0], tiles.shape[1]
    maxs = tiles.max(axis=(2, 3))
    mins = tiles.min(axis=(2, 3))
    ok = mins > 0.0
    total = float(np.sum(np.log(maxs[ok] / mins[ok])))
    return 2.0 / (k1 * k2) * total


def uism(img: np.ndarray) -> float:
    """Sharpness: Rec.601-weighted EME of the Sobel-edge-weighted channels."""
    x = _check_uiqm_input(img)
    weights = (0.299, 0.587, 0.114)
    total = 0.0
    for c, w in enumerate(weights):
        channel = x[..., c]
        edges = sobel_gradient_magnitude(channel)
        total += w * _eme(channel * edges)
    return total


def uiconm(img: np.ndarray) -> float:
    """Contrast: logAMEE over full 8x8 blocks spanning all three channels.

    Each block contributes (t / s) * log(t / s) with t = max - min and
    s = max + min; blocks with t == 0 or s == 0 contribute zero. The sum
    is scaled by -1 / (k1 k2), making the score non-negative.
    """
    x = _check_uiqm_input(img)
    tiles = _block_views(x, UIQM_BLOCK)
    k2, k1 = tiles.shape[0], tiles.shape[1]
    maxs = tiles.max(axis=(2, 3, 4))
    mins = tiles.min(axis=(2, 3, 4))
    top = maxs - mins
    bot = maxs + mins
    ok = (top > 0.0) & (bot > 0.0)
    ratio = top[ok] / bot[ok]
    total = float(np.sum(ratio * np.log(ratio)))
    return -total / (k1 * k2)


def uiqm(img: np.ndarray, coeffs: tuple[float, float, float] = DEFAULT_UIQM_COEFFS) -> float:
    """c1 * UICM + c2 * UISM + c3 * UIConM."""
    c1, c2, c3 = coeffs
    return c1 * uicm(img) + c2 * uism(img) + c3 * uiconm(img)


def report(
    output: np.ndarray, target: np.ndarray, saliency: np.ndarray | None = None
) -> MetricReport:
    """Full metric row for one (output, ground truth) pair."""
    return MetricReport(
        psnr=psnr(output, target),
        ssim=ssim(output, target),
        uiqm=uiqm(output),
        uicm=uicm(output),
        uism=uism(output),
        uiconm=uiconm(output),
        cmi=None if saliency is None else cmi(output, saliency),
    )
