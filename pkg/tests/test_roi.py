import numpy as np
import pytest

from sesr.errors import EmptyRoiError
from sesr.roi import RoiBox, select_roi


def blob(canvas, cy, cx, r, value=1.0):
    yy, xx = np.mgrid[0 : canvas.shape[0], 0 : canvas.shape[1]]
    canvas[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = value
    return canvas


def density_mode_reference(s, bandwidth, threshold=0.5):
    """Brute-force flat-kernel density over every pixel coordinate."""
    ys, xs = np.nonzero(s >= threshold)
    pts = np.stack([ys, xs], axis=1).astype(float)
    weights = s[ys, xs].astype(float)
    best, best_val = None, -1.0
    for cy in range(s.shape[0]):
        for cx in range(s.shape[1]):
            d = np.linalg.norm(pts - np.array([cy, cx]), axis=1)
            val = weights[d <= bandwidth].sum()
            if val > best_val:
                best_val, best = val, (cy, cx)
    return np.array(best, dtype=float)


class TestSelectRoi:
    def test_single_blob_tight_box(self):
        s = blob(np.zeros((40, 40), dtype=np.float32), 20, 22, 6)
        box = select_roi(s, bandwidth=10)
        ys, xs = np.nonzero(s >= 0.5)
        assert (box.y0, box.y1) == (ys.min(), ys.max() + 1)
        assert (box.x0, box.x1) == (xs.min(), xs.max() + 1)
        assert box.score == pytest.approx(float(s[box.y0 : box.y1, box.x0 : box.x1].mean()))

    def test_heavier_blob_wins(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            s = np.zeros((48, 48), dtype=np.float32)
            cy1, cx1 = rng.integers(8, 16), rng.integers(8, 16)
            cy2, cx2 = rng.integers(32, 40), rng.integers(32, 40)
            blob(s, cy1, cx1, 6, 1.0)  # roughly double the mass
            blob(s, cy2, cx2, 4, 0.9)
            bw = 8.0
            box = select_roi(s, bandwidth=bw)
            mode = np.array([(box.y0 + box.y1) / 2, (box.x0 + box.x1) / 2])
            ref = density_mode_reference(s, bw)
            assert np.linalg.norm(mode - ref) <= bw, trial

    def test_all_zero_raises(self):
        with pytest.raises(EmptyRoiError):
            select_roi(np.zeros((16, 16), dtype=np.float32))

    def test_box_clamped_to_image(self):
        s = blob(np.zeros((20, 20), dtype=np.float32), 0, 0, 5)
        box = select_roi(s, bandwidth=8)
        assert 0 <= box.x0 < box.x1 <= 20
        assert 0 <= box.y0 < box.y1 <= 20

    def test_bad_bandwidth(self):
        s = blob(np.zeros((16, 16), dtype=np.float32), 8, 8, 3)
        with pytest.raises(ValueError):
            select_roi(s, bandwidth=0.2)

    def test_default_bandwidth_quarter_min_dim(self):
        s = blob(np.zeros((32, 64), dtype=np.float32), 16, 32, 5)
        box = select_roi(s)  # default bandwidth = 8
        assert isinstance(box, RoiBox)
        assert box.width >= 10 and box.height >= 10
