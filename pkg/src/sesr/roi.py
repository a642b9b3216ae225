"""Region-of-interest selection from a predicted saliency map via
flat-kernel mean-shift mode seeking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRoiError

MAX_ITERATIONS = 100
CONVERGENCE_SHIFT = 0.5  # pixels


@dataclass
class RoiBox:
    """Half-open pixel box [x0, x1) x [y0, y1) with its mean saliency."""

    x0: int
    y0: int
    x1: int
    y1: int
    score: float

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


def select_roi(
    s_hat: np.ndarray, bandwidth: float | None = None, threshold: float = 0.5
) -> RoiBox:
    """Locate the dominant salient region.

    Mean-shift runs over the coordinates of pixels with saliency >=
    threshold, weighted by their saliency, with a flat kernel of the given
    bandwidth (default min(H, W) / 4), starting from the weighted
    centroid. The returned box tightly bounds the above-threshold pixels
    within one bandwidth of the converged mode, clamped to the image.
    """
    if s_hat.ndim != 2:
        raise ValueError(f"expected (H, W) saliency map, got shape {s_hat.shape}")
    if bandwidth is not None and bandwidth < 1:
        raise ValueError(f"bandwidth must be >= 1, got {bandwidth}")
    h, w = s_hat.shape
    if bandwidth is None:
        bandwidth = max(1.0, min(h, w) / 4.0)
    ys, xs = np.nonzero(s_hat >= threshold)
    if len(ys) == 0:
        raise EmptyRoiError(f"no saliency value reaches the threshold {threshold}")
    points = np.stack([ys, xs], axis=1).astype(np.float64)
    weights = s_hat[ys, xs].astype(np.float64)

    current = np.average(points, axis=0, weights=weights)
    for _ in range(MAX_ITERATIONS):
        dists = np.linalg.norm(points - current, axis=1)
        inside = dists <= bandwidth
        if not inside.any():
            # Start fell into a gap between modes; snap to the nearest point.
            current = points[np.argmin(dists)]
            continue
        shifted = np.average(points[inside], axis=0, weights=weights[inside])
        shift = float(np.linalg.norm(shifted - current))
        current = shifted
        if shift < CONVERGENCE_SHIFT:
            break

    member = np.linalg.norm(points - current, axis=1) <= bandwidth
    box_ys, box_xs = points[member, 0], points[member, 1]
    y0 = int(max(0, box_ys.min()))
    y1 = int(min(h, box_ys.max() + 1))
    x0 = int(max(0, box_xs.min()))
    x1 = int(min(w, box_xs.max() + 1))
    score = float(np.mean(s_hat[y0:y1, x0:x1]))
    return RoiBox(x0=x0, y0=y0, x1=x1, y1=y1, score=score)
