import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sesr import losses
from sesr.errors import ConfigurationError
from sesr.losses import FixedRandomExtractor, LossWeights


def rand_pair(seed, shape=(1, 3, 8, 8), dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    a = torch.rand(shape, generator=gen, dtype=dtype)
    b = torch.rand(shape, generator=gen, dtype=dtype)
    return a, b


class TestSaliencyLoss:
    def test_perfect_binary_prediction(self):
        s = (torch.rand(1, 1, 8, 8) > 0.5).double()
        assert losses.saliency_loss(s, s.clone()) <= 1e-6

    def test_uniform_half_prediction_is_ln2(self):
        s = (torch.rand(1, 1, 8, 8) > 0.5).double()
        s_hat = torch.full_like(s, 0.5)
        assert float(losses.saliency_loss(s, s_hat)) == pytest.approx(math.log(2), abs=1e-9)

    def test_matches_brute_force(self):
        s, s_hat = rand_pair(0, (1, 1, 8, 8))
        total = 0.0
        for i in range(8):
            for j in range(8):
                p = min(max(float(s_hat[0, 0, i, j]), 1e-7), 1 - 1e-7)
                t = float(s[0, 0, i, j])
                total += -(t * math.log(p) + (1 - t) * math.log(1 - p))
        assert float(losses.saliency_loss(s, s_hat)) == pytest.approx(total / 64, abs=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            losses.saliency_loss(torch.rand(1, 1, 8, 8), torch.rand(1, 1, 8, 9))


class TestContrastLoss:
    def test_identical_pairs_zero(self):
        e, _ = rand_pair(1)
        s = torch.rand(1, 1, 8, 8, dtype=torch.float64)
        assert float(losses.contrast_loss_lr(e, e.clone(), s, s.clone())) == 0.0

    def test_known_cmi_difference(self):
        from sesr import metrics

        e = torch.full((1, 3, 8, 8), 0.5, dtype=torch.float64)
        s = torch.full((1, 1, 8, 8), 0.5, dtype=torch.float64)  # CMI exactly 0
        e_hat = torch.full((1, 3, 8, 8), 0.2, dtype=torch.float64)
        e_hat[..., :4] = 0.8
        s_hat = torch.zeros((1, 1, 8, 8), dtype=torch.float64)
        s_hat[..., :4] = 1.0
        expected_cmi = metrics.cmi(
            e_hat[0].permute(1, 2, 0).numpy(), s_hat[0, 0].numpy()
        )
        got = float(losses.contrast_loss_lr(e, e_hat, s, s_hat))
        assert got == pytest.approx(expected_cmi**2, rel=1e-9)

    def test_gradient_vs_finite_differences(self):
        e, e_hat = rand_pair(2)
        s, s_hat = rand_pair(3, (1, 1, 8, 8))
        s_hat = (s_hat * 0.8 + 0.1).requires_grad_(True)
        e_hat = e_hat.requires_grad_(True)
        losses.contrast_loss_lr(e, e_hat, s, s_hat).backward()
        h = 1e-5
        flat = e_hat.detach().clone().view(-1)
        for idx in (0, 50, 191):
            for sign, store in ((1, "up"), (-2, "dn"), (1, None)):
                flat[idx] += sign * h
                if store == "up":
                    up = float(losses.contrast_loss_lr(e, flat.view(1, 3, 8, 8), s, s_hat.detach()))
                elif store == "dn":
                    dn = float(losses.contrast_loss_lr(e, flat.view(1, 3, 8, 8), s, s_hat.detach()))
            fd = (up - dn) / (2 * h)
            assert float(e_hat.grad.view(-1)[idx]) == pytest.approx(fd, rel=1e-4, abs=1e-9)


class TestPerceptualColorLR:
    def test_identical_zero(self):
        e, _ = rand_pair(4)
        assert float(losses.perceptual_color_lr(e, e.clone())) == 0.0

    def test_single_pixel_red_shift(self):
        e = torch.zeros(1, 3, 1, 1, dtype=torch.float64)
        e_hat = torch.zeros(1, 3, 1, 1, dtype=torch.float64)
        e_hat[0, 0] = 0.1
        assert float(losses.perceptual_color_lr(e, e_hat)) == pytest.approx(0.05, rel=1e-12)

    @given(
        ints=st.lists(st.integers(0, 48), min_size=12, max_size=12),
        delta=st.integers(1, 16),
    )
    @settings(max_examples=30, deadline=None)
    def test_blind_to_uniform_gray_shift(self, ints, delta):
        # Dyadic values make the channel differences exactly equal.
        e = torch.tensor(ints, dtype=torch.float64).view(1, 3, 2, 2) / 64.0
        e_hat = e + delta / 64.0
        assert float(losses.perceptual_color_lr(e, e_hat)) == 0.0


class TestPerceptualColorHR:
    def test_identical_zero(self):
        y, _ = rand_pair(5)
        assert float(losses.perceptual_color_hr(y, y.clone())) == 0.0

    def test_single_pixel_redmean_substitution(self):
        # Channel means chosen so rbar is exactly 128 while each delta is 25.5.
        y = torch.tensor([115.25, 100.0, 100.0], dtype=torch.float64).view(1, 3, 1, 1) / 255.0
        y_hat = torch.tensor([140.75, 125.5, 125.5], dtype=torch.float64).view(1, 3, 1, 1) / 255.0
        expected = (2.5 + 4.0 + 639.0 / 256.0) * 25.5**2
        assert float(losses.perceptual_color_hr(y, y_hat)) == pytest.approx(expected, rel=1e-9)
        assert expected == pytest.approx(5849.71, abs=0.01)

    def test_gradient_vs_finite_differences(self):
        y, y_hat = rand_pair(6)
        y_hat = y_hat.requires_grad_(True)
        losses.perceptual_color_hr(y, y_hat).backward()
        h = 1e-5
        flat = y_hat.detach().clone().view(-1)
        for idx in (0, 77, 180):
            flat[idx] += h
            up = float(losses.perceptual_color_hr(y, flat.view(1, 3, 8, 8)))
            flat[idx] -= 2 * h
            dn = float(losses.perceptual_color_hr(y, flat.view(1, 3, 8, 8)))
            flat[idx] += h
            fd = (up - dn) / (2 * h)
            assert float(y_hat.grad.view(-1)[idx]) == pytest.approx(fd, rel=1e-4)


class TestColorLoss:
    def test_identical_zero(self):
        a, _ = rand_pair(7)
        assert float(losses.color_loss(a, a.clone(), "LR")) == 0.0
        assert float(losses.color_loss(a, a.clone(), "HR")) == 0.0

    def test_fixed_blend_coefficients(self):
        # 0.25 * L_P + 0.75 * L_2: with L_P = 0.05 and L_2 = 0.01 the blend
        # is 0.02; verified against the recomposed terms on real tensors.
        assert 0.25 * 0.05 + 0.75 * 0.01 == pytest.approx(0.02)
        a, b = rand_pair(8)
        for tier, perceptual in (
            ("LR", losses.perceptual_color_lr),
            ("HR", losses.perceptual_color_hr),
        ):
            expected = 0.25 * float(perceptual(a, b)) + 0.75 * float(losses.mse(a, b))
            assert float(losses.color_loss(a, b, tier)) == pytest.approx(expected, rel=1e-12)

    def test_unknown_tier(self):
        a, b = rand_pair(9)
        with pytest.raises(ValueError):
            losses.color_loss(a, b, "XL")


class TestContentLoss:
    def test_identical_zero_any_extractor(self):
        a, _ = rand_pair(10, (1, 3, 16, 16))
        ext = FixedRandomExtractor(seed=0, downsample=2)
        assert float(losses.content_loss(a, a.clone(), ext)) == 0.0
        assert float(losses.content_loss(a, a.clone(), None)) == 0.0

    def test_identity_extractor_equals_mse(self):
        a, b = rand_pair(11)
        assert float(losses.content_loss(a, b, None)) == pytest.approx(
            float(losses.mse(a, b)), rel=1e-12
        )

    def test_matches_brute_force_feature_mse(self):
        a, b = rand_pair(12, (1, 3, 32, 32))
        ext = FixedRandomExtractor(seed=3, downsample=4)
        fa = ext(a).detach().numpy()
        fb = ext(b).detach().numpy()
        expected = float(np.mean((fa - fb) ** 2))
        assert float(losses.content_loss(a, b, ext)) == pytest.approx(expected, rel=1e-6)

    def test_extractor_deterministic_by_seed(self):
        a, _ = rand_pair(13, (1, 3, 16, 16))
        f1 = FixedRandomExtractor(seed=5, downsample=2)(a)
        f2 = FixedRandomExtractor(seed=5, downsample=2)(a)
        f3 = FixedRandomExtractor(seed=6, downsample=2)(a)
        assert torch.equal(f1, f2)
        assert not torch.equal(f1, f3)

    def test_vgg_unavailable_names_fallback(self):
        # No network access in this environment: the pretrained path either
        # loads (cached weights) or must raise a configuration error that
        # names the random fallback.
        try:
            ext = losses.make_extractor("vgg19")
        except ConfigurationError as exc:
            assert "random" in str(exc)
        else:
            feats = ext(torch.rand(1, 3, 64, 64))
            assert feats.shape[1] == 512

    def test_unknown_extractor_kind(self):
        with pytest.raises(ConfigurationError):
            losses.make_extractor("resnet")


class TestSharpnessLoss:
    def test_identical_zero(self):
        y, _ = rand_pair(14)
        assert float(losses.sharpness_loss(y, y.clone())) == 0.0

    def test_two_constants_zero(self):
        y = torch.full((1, 3, 8, 8), 0.2, dtype=torch.float64)
        y_hat = torch.full((1, 3, 8, 8), 0.9, dtype=torch.float64)
        assert float(losses.sharpness_loss(y, y_hat)) == 0.0

    def test_step_edge_vs_constant_matches_stencil_oracle(self):
        from sesr import imagecore

        img = np.zeros((8, 8, 3), dtype=np.float64)
        img[:, 4:] = 1.0
        y = torch.from_numpy(img.transpose(2, 0, 1)).unsqueeze(0)
        y_hat = torch.zeros_like(y)
        expected = float(np.mean(imagecore.sobel_gradient_magnitude(img) ** 2))
        assert float(losses.sharpness_loss(y, y_hat)) == pytest.approx(expected, rel=1e-9)


class TestTotalObjective:
    def _tuples(self, seed=20, with_saliency=True):
        gen = torch.Generator().manual_seed(seed)
        s = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)
        e = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        y = torch.rand(1, 3, 16, 16, generator=gen, dtype=torch.float64)
        s_hat = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64) * 0.8 + 0.1
        e_hat = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        y_hat = torch.rand(1, 3, 16, 16, generator=gen, dtype=torch.float64)
        if not with_saliency:
            s = s_hat = None
        return (s_hat, e_hat, y_hat), (s, e, y)

    def test_zero_at_targets(self):
        (_, e, y), _ = self._tuples()
        # Saliency supervision is binary; cross-entropy of s against itself
        # is only zero after the clamping for hard labels.
        s = (torch.rand(1, 1, 8, 8, dtype=torch.float64) > 0.5).double()
        bd = losses.total_objective(
            (s, e, y), (s, e, y), LossWeights(), extractor=FixedRandomExtractor(0, 2)
        )
        assert float(bd.total) <= 1e-6

    def test_single_weight_selects_term(self):
        outputs, targets = self._tuples()
        w = LossWeights(
            lambda_s_aan=0, lambda_c_lr=0, lambda_f_lr=0, lambda_t_lr=0,
            lambda_c_hr=1.0, lambda_f_hr=0, lambda_g_hr=0,
        )
        bd = losses.total_objective(outputs, targets, w)
        expected = losses.color_loss(targets[2], outputs[2], "HR")
        assert float(bd.total) == pytest.approx(float(expected), rel=1e-12)
        assert float(bd.saliency) == 0.0 and float(bd.sharpness_hr) == 0.0

    def test_recomposition(self):
        outputs, targets = self._tuples()
        w = LossWeights()
        ext = FixedRandomExtractor(seed=1, downsample=2)
        bd = losses.total_objective(outputs, targets, w, extractor=ext)
        manual = (
            w.lambda_s_aan * float(bd.saliency)
            + w.lambda_c_lr * float(bd.color_lr)
            + w.lambda_f_lr * float(bd.content_lr)
            + w.lambda_t_lr * float(bd.contrast_lr)
            + w.lambda_c_hr * float(bd.color_hr)
            + w.lambda_f_hr * float(bd.content_hr)
            + w.lambda_g_hr * float(bd.sharpness_hr)
        )
        assert float(bd.total) == pytest.approx(manual, rel=1e-6)
        assert float(bd.color_lr) == pytest.approx(
            0.25 * float(bd.perceptual_lr) + 0.75 * float(bd.l2_lr), rel=1e-12
        )

    def test_missing_saliency_drops_terms(self):
        outputs, targets = self._tuples(with_saliency=False)
        bd = losses.total_objective(outputs, targets, LossWeights())
        assert float(bd.saliency) == 0.0
        assert float(bd.contrast_lr) == 0.0
        assert float(bd.total) > 0.0

    def test_weight_scaling_linearity(self):
        outputs, targets = self._tuples()
        w1 = LossWeights()
        w2 = LossWeights(**{k: 2.0 * v for k, v in w1.__dict__.items()})
        bd1 = losses.total_objective(outputs, targets, w1)
        bd2 = losses.total_objective(outputs, targets, w2)
        assert float(bd2.total) == pytest.approx(2.0 * float(bd1.total), rel=1e-9)

    def test_shape_mismatch(self):
        outputs, targets = self._tuples()
        bad = (outputs[0], outputs[1], torch.rand(1, 3, 15, 16, dtype=torch.float64))
        with pytest.raises(ValueError):
            losses.total_objective(bad, targets, LossWeights())

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_c_lr=-0.1)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_every_term_non_negative(self, seed):
        gen = torch.Generator().manual_seed(seed)
        s = (torch.rand(1, 1, 8, 8, generator=gen) > 0.5).double()
        s_hat = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)
        e = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        e_hat = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        y = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        y_hat = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        bd = losses.total_objective(
            (s_hat, e_hat, y_hat), (s, e, y), LossWeights(),
            extractor=FixedRandomExtractor(0, 2),
        )
        for name, value in bd.as_floats().items():
            assert value >= 0.0, name
