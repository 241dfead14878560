import unittest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from beamsema.errors import ConfigError
from beamsema.scenarios import (
    DETECTOR_PROFILES,
    PresetError,
    list_presets,
    load_experiment_config,
    load_preset,
    noise_from_section,
    train_config_for,
)
from beamsema.scene_sim import (
    Sample,
    SceneFrame,
    VehiclePose,
    perturb_detection,
    project_bbox,
    render_mask,
    render_raster,
)
from beamsema.schemas import NoiseConfig, PredictorKind


class PresetTests(unittest.TestCase):
    def test_bundled_presets(self):
        self.assertEqual(list_presets(), ["scenario5", "scenario7"])

    def test_scenario5_reference_values(self):
        preset = load_preset("scenario5")
        self.assertEqual(preset.scene.num_samples, 2300)
        self.assertEqual(preset.scene.lighting, "night")
        self.assertEqual(preset.scene.road_start, (-16.5, 10.0))
        self.assertEqual(preset.channel.num_beams, 64)
        self.assertEqual(preset.channel.num_antennas, 16)
        self.assertEqual(preset.noise.mask_flip_prob, DETECTOR_PROFILES["mobile"]["mask_flip_prob"])

    def test_like_suffix_and_scenario7(self):
        preset = load_preset("scenario7-like")
        self.assertEqual(preset.name, "scenario7")
        self.assertEqual(preset.scene.num_samples, 854)
        self.assertEqual(preset.noise.bbox_jitter, DETECTOR_PROFILES["large"]["bbox_jitter"])

    def test_noiseless_drops_noise_and_nlos(self):
        preset = load_preset("scenario5", noiseless=True)
        self.assertEqual(preset.noise, NoiseConfig.zero())
        self.assertEqual(preset.channel.num_nlos_paths, 0)

    def test_unknown_preset_lists_available(self):
        with self.assertRaises(PresetError) as ctx:
            load_preset("scenario1")
        self.assertIn("scenario5", str(ctx.exception))

    def test_explicit_noise_keys_override_profile(self):
        noise = noise_from_section({"detector": "large", "miss_prob": "0.5"})
        self.assertEqual(noise.miss_prob, 0.5)
        self.assertEqual(noise.mask_flip_prob, DETECTOR_PROFILES["large"]["mask_flip_prob"])
        with self.assertRaises(PresetError):
            noise_from_section({"detector": "tiny"})


class ExperimentConfigTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = TemporaryDirectory()
        self.root = Path(self.tmpdir.name)

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_default_experiment(self):
        cfg = load_experiment_config()
        self.assertEqual(len(cfg.predictors), 4)
        self.assertEqual(cfg.arch.cnn_filters, (16, 32, 64))
        bbox = train_config_for(cfg, PredictorKind.BBOX_MLP)
        self.assertEqual((bbox.batch_size, bbox.total_epochs, bbox.decay_epochs), (128, 50, (15, 30)))

    def test_seed_override_flows_into_train_configs(self):
        cfg = load_experiment_config(seed_override=7)
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(train_config_for(cfg, PredictorKind.MASK_LENET).seed, 7)

    def test_missing_train_section_uses_default_column(self):
        path = self.root / "e.ini"
        path.write_text("[experiment]\ndataset = d\npredictors = image_cnn_baseline\n", encoding="utf-8")
        cfg = load_experiment_config(path)
        tcfg = train_config_for(cfg, PredictorKind.IMAGE_CNN_BASELINE)
        self.assertEqual((tcfg.batch_size, tcfg.base_lr, tcfg.total_epochs), (64, 1e-3, 30))

    def test_invalid_files(self):
        with self.assertRaises(ConfigError):
            load_experiment_config(self.root / "nao_existe.ini")
        no_section = self.root / "a.ini"
        no_section.write_text("[arch]\nmask_width = 32\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_experiment_config(no_section)
        bad_train = self.root / "b.ini"
        bad_train.write_text("[experiment]\ndataset = d\n[train.resnet]\nbatch_size = 1\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_experiment_config(bad_train)
        bad_split = self.root / "c.ini"
        bad_split.write_text("[experiment]\ndataset = d\n[split]\ntrain = 0.9\nval = 0.2\ntest = 0.1\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_experiment_config(bad_split)


class DetectorOverrideTests(unittest.TestCase):
    def test_override_swaps_the_profile(self):
        large = load_preset("scenario5", detector="large").noise
        mobile = load_preset("scenario7", detector="mobile").noise
        self.assertEqual(large.mask_flip_prob, DETECTOR_PROFILES["large"]["mask_flip_prob"])
        self.assertEqual(mobile.miss_prob, DETECTOR_PROFILES["mobile"]["miss_prob"])
        self.assertEqual(large.gps_sigma, load_preset("scenario5").noise.gps_sigma)
        with self.assertRaises(PresetError):
            load_preset("scenario5", detector="yolo")

    def test_noiseless_wins_over_detector(self):
        self.assertEqual(load_preset("scenario5", noiseless=True, detector="mobile").noise, NoiseConfig.zero())

    def test_profiles_perturb_the_same_scene_differently(self):
        scene = load_preset("scenario5").scene
        frame = SceneFrame(VehiclePose(x=2.0, y=10.0, heading=0.0, length=4.6, width=1.9, height=1.6, gray=0.5))
        bbox = project_bbox(frame, scene)
        clean = Sample(
            sample_id=0,
            gps=np.array([2.0, 10.0]),
            clean_bbox=bbox,
            bbox=bbox,
            mask=render_mask(frame, scene),
            raster=render_raster(frame, scene),
            beam=0,
        )

        def stats(profile: str):
            noise = load_preset("scenario5", detector=profile).noise
            rng = np.random.default_rng(0)
            flipped, shift = [], []
            for _ in range(100):
                out = perturb_detection(clean, noise, rng)
                flipped.append(int(np.count_nonzero(out.mask != clean.mask)))
                shift.append(abs(out.bbox.x_c - clean.bbox.x_c))
            return float(np.mean(flipped)), float(np.mean(shift))

        large_flips, large_shift = stats("large")
        mobile_flips, mobile_shift = stats("mobile")
        self.assertGreater(mobile_flips, 2 * large_flips)
        self.assertGreater(mobile_shift, large_shift)


if __name__ == "__main__":
    unittest.main()
