"""The seven differentiable training losses and their unified combination.

All tensors are NCHW (saliency maps N1HW) and every norm in the objective
reduces by the per-element mean, so magnitudes are resolution-independent
and the default weights transfer across scales. Functions accept float32
or float64 input; gradient-verification suites run them in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError

SALIENCY_EPS = 1e-7
CMI_EPS = 1e-8


@dataclass
class LossWeights:
    """Scaling factors of the combined objective; all non-negative.

    Defaults keep the color terms at unit weight, damp the feature-content
    terms (raw deep-feature magnitudes dominate otherwise), and give the
    contrast/sharpness shaping terms half weight.
    """

    lambda_s_aan: float = 1.0
    lambda_c_lr: float = 1.0
    lambda_f_lr: float = 0.1
    lambda_t_lr: float = 0.5
    lambda_c_hr: float = 1.0
    lambda_f_hr: float = 0.1
    lambda_g_hr: float = 0.5

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass
class LossBreakdown:
    """Every sub-term of one objective evaluation, as 0-dim tensors.

    total is the weighted combination of the parts under the active
    weights; terms skipped (zero weight, or missing saliency supervision)
    are reported as 0.
    """

    saliency: torch.Tensor
    contrast_lr: torch.Tensor
    perceptual_lr: torch.Tensor
    l2_lr: torch.Tensor
    color_lr: torch.Tensor
    content_lr: torch.Tensor
    perceptual_hr: torch.Tensor
    l2_hr: torch.Tensor
    color_hr: torch.Tensor
    content_hr: torch.Tensor
    sharpness_hr: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.__dict__.items()}


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def saliency_loss(s: torch.Tensor, s_hat: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel cross-entropy between predicted and reference saliency."""
    _check_same_shape(s, s_hat)
    p = s_hat.clamp(SALIENCY_EPS, 1.0 - SALIENCY_EPS)
    return torch.mean(-(s * torch.log(p) + (1.0 - s) * torch.log(1.0 - p)))


def cmi(img: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Differentiable contrast measurement index of an N3HW image under an
    N1HW saliency mask (matches metrics.cmi numerically)."""
    if img.shape[-2:] != mask.shape[-2:]:
        raise ValueError(f"spatial mismatch: {tuple(img.shape)} vs {tuple(mask.shape)}")
    fg = torch.mean(img * mask)
    bg = torch.mean(img * (1.0 - mask))
    return (fg - bg) / (fg + bg + CMI_EPS)


def contrast_loss_lr(
    e: torch.Tensor, e_hat: torch.Tensor, s: torch.Tensor, s_hat: torch.Tensor
) -> torch.Tensor:
    """Squared difference of the mask-weighted contrast indices of the
    reference and predicted enhanced images."""
    _check_same_shape(e, e_hat)
    _check_same_shape(s, s_hat)
    return (cmi(e, s) - cmi(e_hat, s_hat)) ** 2


def perceptual_color_lr(e: torch.Tensor, e_hat: torch.Tensor) -> torch.Tensor:
    """Chrominance-plane penalty: mean of 4(dr-dg)^2 + (dr+dg-2db)^2 over
    per-pixel channel differences, blind to uniform gray shifts."""
    _check_same_shape(e, e_hat)
    d = e_hat - e
    dr, dg, db = d[:, 0], d[:, 1], d[:, 2]
    return torch.mean(4.0 * (dr - dg) ** 2 + (dr + dg - 2.0 * db) ** 2)


def perceptual_color_hr(y: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    """Red-mean weighted channel distance at HR, computed in 8-bit units
    (the 512/256/767 coefficients are calibrated to that range)."""
    _check_same_shape(y, y_hat)
    ref = y * 255.0
    pred = y_hat * 255.0
    rbar = (ref[:, 0] + pred[:, 0]) / 2.0
    d = pred - ref
    return torch.mean(
        (512.0 + rbar) / 256.0 * d[:, 0] ** 2
        + 4.0 * d[:, 1] ** 2
        + (767.0 - rbar) / 256.0 * d[:, 2] ** 2
    )


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _check_same_shape(a, b)
    return torch.mean((a - b) ** 2)


def color_loss(a: torch.Tensor, a_hat: torch.Tensor, tier: str) -> torch.Tensor:
    """0.25 * perceptual term (by tier) + 0.75 * plain MSE in [0,1] units."""
    if tier == "LR":
        perceptual = perceptual_color_lr(a, a_hat)
    elif tier == "HR":
        perceptual = perceptual_color_hr(a, a_hat)
    else:
        raise ValueError(f"tier must be 'LR' or 'HR', got {tier!r}")
    return 0.25 * perceptual + 0.75 * mse(a, a_hat)


def content_loss(a: torch.Tensor, a_hat: torch.Tensor, extractor=None) -> torch.Tensor:
    """Mean squared difference of fixed deep features; extractor=None
    compares raw pixels (identity features)."""
    _check_same_shape(a, a_hat)
    if extractor is None:
        return mse(a, a_hat)
    return torch.mean((extractor(a) - extractor(a_hat)) ** 2)


def _sobel_squared(img: torch.Tensor) -> torch.Tensor:
    """Ix^2 + Iy^2 of the Rec.601 luminance, replicate borders (N1HW).

    Separable smooth-then-difference form, so constants map to exact zero.
    """
    lum = (0.299 * img[:, 0] + 0.587 * img[:, 1] + 0.114 * img[:, 2]).unsqueeze(1)
    p = F.pad(lum, (1, 1, 1, 1), mode="replicate")
    h, w = lum.shape[-2], lum.shape[-1]
    smooth_y = p[..., 0:h, :] + 2.0 * p[..., 1 : h + 1, :] + p[..., 2 : h + 2, :]
    gx = smooth_y[..., 2 : w + 2] - smooth_y[..., 0:w]
    smooth_x = p[..., 0:w] + 2.0 * p[..., 1 : w + 1] + p[..., 2 : w + 2]
    gy = smooth_x[..., 2 : h + 2, :] - smooth_x[..., 0:h, :]
    return gx * gx + gy * gy


def sharpness_loss(y: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference of squared Sobel gradient magnitudes (the
    squared form avoids the square root's kink at flat regions)."""
    _check_same_shape(y, y_hat)
    return torch.mean(torch.abs(_sobel_squared(y) - _sobel_squared(y_hat)))


def total_objective(
    outputs: tuple[torch.Tensor | None, torch.Tensor, torch.Tensor],
    targets: tuple[torch.Tensor | None, torch.Tensor, torch.Tensor],
    weights: LossWeights,
    extractor=None,
) -> LossBreakdown:
    """Evaluate every loss term and the weighted total.

    outputs = (saliency, enhanced LR, HR), targets likewise. Saliency and
    contrast terms are skipped when either side has no saliency map (data
    without annotations) or when their weight is zero; skipped terms are
    reported as 0.
    """
    s_hat, e_hat, y_hat = outputs
    s, e, y = targets
    _check_same_shape(e, e_hat)
    _check_same_shape(y, y_hat)
    zero = torch.zeros((), dtype=e_hat.dtype, device=e_hat.device)
    have_saliency = s is not None and s_hat is not None

    w = weights
    saliency = (
        saliency_loss(s, s_hat) if have_saliency and w.lambda_s_aan > 0 else zero
    )
    contrast = (
        contrast_loss_lr(e, e_hat, s, s_hat) if have_saliency and w.lambda_t_lr > 0 else zero
    )
    if w.lambda_c_lr > 0:
        perceptual_lr = perceptual_color_lr(e, e_hat)
        l2_lr = mse(e, e_hat)
        c_lr = 0.25 * perceptual_lr + 0.75 * l2_lr
    else:
        perceptual_lr = l2_lr = c_lr = zero
    if w.lambda_c_hr > 0:
        perceptual_hr = perceptual_color_hr(y, y_hat)
        l2_hr = mse(y, y_hat)
        c_hr = 0.25 * perceptual_hr + 0.75 * l2_hr
    else:
        perceptual_hr = l2_hr = c_hr = zero
    content_lr = content_loss(e, e_hat, extractor) if w.lambda_f_lr > 0 else zero
    content_hr = content_loss(y, y_hat, extractor) if w.lambda_f_hr > 0 else zero
    sharpness = sharpness_loss(y, y_hat) if w.lambda_g_hr > 0 else zero

    total = (
        w.lambda_s_aan * saliency
        + w.lambda_c_lr * c_lr
        + w.lambda_f_lr * content_lr
        + w.lambda_t_lr * contrast
        + w.lambda_c_hr * c_hr
        + w.lambda_f_hr * content_hr
        + w.lambda_g_hr * sharpness
    )
    return LossBreakdown(
        saliency=saliency,
        contrast_lr=contrast,
        perceptual_lr=perceptual_lr,
        l2_lr=l2_lr,
        color_lr=c_lr,
        content_lr=content_lr,
        perceptual_hr=perceptual_hr,
        l2_hr=l2_hr,
        color_hr=c_hr,
        content_hr=content_hr,
        sharpness_hr=sharpness,
        total=total,
    )


class FixedRandomExtractor(nn.Module):
    """Seeded, frozen convolutional feature stack used as the content
    extractor when pretrained weights are unavailable (and in tests).

    Stride-2 tanh convolutions; the default depth matches the /16 spatial
    reduction of a VGG-19 final-conv feature map. The smooth nonlinearity
    keeps the content loss friendly to finite-difference verification.
    """

    def __init__(self, seed: int = 0, downsample: int = 16, base_channels: int = 16):
        super().__init__()
        depth = int(math.log2(downsample))
        if 2**depth != downsample or depth < 1:
            raise ValueError(f"downsample must be a power of two >= 2, got {downsample}")
        gen = torch.Generator().manual_seed(seed)
        in_ch = 3
        for i in range(depth):
            out_ch = base_channels * 2 ** min(i, 3)
            w = torch.randn(out_ch, in_ch, 3, 3, generator=gen) * math.sqrt(2.0 / (in_ch * 9))
            self.register_buffer(f"weight_{i}", w)
            in_ch = out_ch
        self.depth = depth

    def forward(self, x):
        for i in range(self.depth):
            w = getattr(self, f"weight_{i}")
            x = torch.tanh(F.conv2d(x, w.to(x.dtype), stride=2, padding=1))
        return x


def _vgg19_extractor():
    try:
        from torchvision.models import VGG19_Weights, vgg19

        net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features[:35].eval()
    except Exception as exc:
        raise ConfigurationError(
            "pretrained VGG-19 feature extractor unavailable "
            f"({type(exc).__name__}: {exc}); fall back to the seeded random "
            "extractor with content_extractor='random'"
        ) from exc
    for p in net.parameters():
        p.requires_grad_(False)
    mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)

    def extract(x):
        return net((x - mean.to(x.dtype)) / std.to(x.dtype))

    return extract


def make_extractor(kind: str = "vgg19", seed: int = 0):
    """Build the content-loss feature extractor.

    "vgg19" needs downloadable pretrained weights and raises
    ConfigurationError naming the fallback when they are missing;
    "random" is the self-contained seeded stack; "identity" compares raw
    pixels.
    """
    if kind == "vgg19":
        return _vgg19_extractor()
    if kind == "random":
        return FixedRandomExtractor(seed=seed)
    if kind == "identity":
        return None
    raise ConfigurationError(f"unknown content extractor {kind!r}")
