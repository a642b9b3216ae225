import json

import numpy as np
import pytest

from sesr import dataset, imagecore, metrics
from sesr.dataset import DegradeSpec, Manifest
from sesr.errors import ValidationError

from conftest import random_image


class TestDegrade:
    def test_set_u_dims(self, rng):
        img = random_image(rng, 480, 640)
        out = dataset.degrade(img, DegradeSpec(set_id="U", scale=2, seed=1))
        assert out.shape == (240, 320, 3)

    def test_set_f_deterministic(self, rng):
        img = random_image(rng, 48, 48)
        spec = DegradeSpec(set_id="F", scale=3, seed=7)
        assert np.array_equal(dataset.degrade(img, spec), dataset.degrade(img, spec))

    def test_order_matters(self, rng):
        img = random_image(rng, 48, 48)
        u = dataset.degrade(img, DegradeSpec(set_id="U", scale=2, noise_level=0.0, seed=3))
        o = dataset.degrade(img, DegradeSpec(set_id="O", scale=2, noise_level=0.0, seed=3))
        # Independent computation of both orders via the primitives.
        blur_then_down = imagecore.downsample_by_scale(
            imagecore.gaussian_blur(img, noise_level=0.0), 2
        )
        down_then_blur = imagecore.gaussian_blur(
            imagecore.downsample_by_scale(img, 2), noise_level=0.0
        )
        np.testing.assert_allclose(u, blur_then_down, atol=1e-6)
        np.testing.assert_allclose(o, down_then_blur, atol=1e-6)
        assert not np.array_equal(u, o)

    def test_invalid_set(self, rng):
        with pytest.raises(ValueError):
            dataset.degrade(random_image(rng, 16, 16), DegradeSpec(set_id="X", scale=2))

    def test_set_f_order_frequency(self, rng):
        img = random_image(rng, 16, 16)
        u = dataset.degrade(img, DegradeSpec(set_id="U", scale=2, noise_level=0.0, seed=0))
        hits = 0
        trials = 300
        for seed in range(trials):
            spec = DegradeSpec(set_id="F", scale=2, noise_level=0.0, seed=seed)
            if np.array_equal(dataset.degrade(img, spec), u):
                hits += 1
        assert 0.43 <= hits / trials <= 0.57

    def test_dims_invariant_all_scales(self, rng):
        import math

        for scale in (2, 3, 4):
            for h, w in [(480, 640), (33, 47), (17, 23)]:
                img = random_image(rng, h, w)
                out = dataset.degrade(img, DegradeSpec(set_id="O", scale=scale, seed=1))
                assert out.shape[:2] == (math.ceil(h / scale), math.ceil(w / scale))


class TestSynthDistort:
    def test_red_never_increases(self, rng):
        for seed in range(5):
            img = random_image(rng, 32, 32)
            out = dataset.synth_distort(img, seed)
            assert out[..., 0].mean() <= img[..., 0].mean()
        # Holds by construction even for a pure-green image.
        green = np.zeros((16, 16, 3), dtype=np.float32)
        green[..., 1] = 1.0
        assert dataset.synth_distort(green, 0)[..., 0].mean() <= 0.0

    def test_deterministic(self, rng):
        img = random_image(rng, 32, 32)
        assert np.array_equal(dataset.synth_distort(img, 11), dataset.synth_distort(img, 11))

    def test_lowers_cmi_against_centered_mask(self):
        img, mask = dataset.synth_scene(5, 48, 48)
        clean_cmi = metrics.cmi(img, mask)
        drops = sum(
            metrics.cmi(dataset.synth_distort(img, seed), mask) < clean_cmi
            for seed in range(100)
        )
        assert drops >= 90


class TestManifest:
    def test_toy_dataset_build(self, tmp_path):
        manifest = dataset.build_toy_dataset(tmp_path, n_samples=3, scale=2, seed=1)
        assert len(manifest) == 3
        sample = dataset.load_sample(manifest, manifest.entries[0])
        assert sample.scale == 2
        assert sample.y.shape == (64, 64, 3)
        assert sample.x.shape == (32, 32, 3)
        assert sample.e.shape == (32, 32, 3)
        assert sample.s.shape == (32, 32)

    def test_scale_inference_benchmark_sizes(self, tmp_path, rng):
        (tmp_path / "hr").mkdir()
        (tmp_path / "lrd").mkdir()
        imagecore.save_image(random_image(rng, 480, 640), tmp_path / "hr" / "a.png")
        imagecore.save_image(random_image(rng, 160, 214), tmp_path / "lrd" / "a.png")
        manifest = dataset.build_manifest(tmp_path)
        assert manifest.entries[0]["scale"] == 3

    def test_no_admissible_scale(self, tmp_path, rng):
        (tmp_path / "hr").mkdir()
        (tmp_path / "lrd").mkdir()
        imagecore.save_image(random_image(rng, 480, 640), tmp_path / "hr" / "a.png")
        imagecore.save_image(random_image(rng, 240, 300), tmp_path / "lrd" / "a.png")
        with pytest.raises(ValidationError, match="a.png"):
            dataset.build_manifest(tmp_path)

    def test_basename_mismatch(self, tmp_path, rng):
        (tmp_path / "hr").mkdir()
        (tmp_path / "lrd").mkdir()
        imagecore.save_image(random_image(rng, 32, 32), tmp_path / "hr" / "a.png")
        imagecore.save_image(random_image(rng, 16, 16), tmp_path / "lrd" / "b.png")
        with pytest.raises(ValidationError):
            dataset.build_manifest(tmp_path)

    def test_round_trip(self, tmp_path):
        manifest = dataset.build_toy_dataset(tmp_path, n_samples=4, scale=3, seed=2)
        loaded = dataset.load_manifest(tmp_path / "manifest.json")
        assert loaded.entries == manifest.entries
        assert loaded.root == manifest.root

    def test_e_falls_back_to_downsampled_y(self, tmp_path):
        manifest = dataset.build_toy_dataset(tmp_path, n_samples=1, scale=2, seed=3)
        entry = json.loads(json.dumps(manifest.entries[0]))
        entry["paths"].pop("lr")
        sample = dataset.load_sample(manifest, entry)
        expected = imagecore.downsample_by_scale(sample.y, 2)
        np.testing.assert_allclose(sample.e, expected, atol=1e-6)


class TestBatches:
    def _manifest(self, n):
        return Manifest(root=None, entries=[{"i": i} for i in range(n)])

    def test_batch_count(self):
        assert len(dataset.batch_indices(5, 2, seed=0, epoch=0)) == 2

    def test_deterministic_per_epoch(self):
        a = dataset.batch_indices(16, 2, seed=3, epoch=5)
        b = dataset.batch_indices(16, 2, seed=3, epoch=5)
        assert a == b

    def test_epochs_reshuffle(self):
        orders = {tuple(np.concatenate(dataset.batch_indices(16, 2, 0, ep))) for ep in range(10)}
        assert len(orders) >= 8

    def test_empty_manifest(self):
        with pytest.raises(ValueError):
            dataset.batch_indices(0, 2, 0, 0)

    def test_loaded_batches(self, tmp_path):
        manifest = dataset.build_toy_dataset(tmp_path, n_samples=5, scale=2, seed=4)
        got = list(dataset.batches(manifest, 2, seed=0, epoch=0))
        assert len(got) == 2
        assert all(len(b) == 2 for b in got)
        assert all(isinstance(s, dataset.PairedSample) for b in got for s in b)
