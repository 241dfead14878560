import json
import os
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pandas as pd

from beamsema import runlog
from beamsema.cli import main as cli_main
from beamsema.errors import DomainError
from beamsema.harness import (
    SplitData,
    SplitError,
    StageError,
    config_digest,
    evaluate,
    evaluate_checkpoint,
    format_report_table,
    knn_oracle,
    load_features,
    load_report,
    prepare_manifest,
    run_experiment,
    split_counts,
    split_dataset,
    sweep_seeds,
    topk_accuracy,
    train_model,
    train_predictor,
    train_single,
    tradeoff_csv,
    tradeoff_table,
)
from beamsema.nn import build_model, dense, load_checkpoint, relu
from beamsema.scenarios import list_presets, load_preset
from beamsema.scene_sim import audit_labels, generate_dataset
from beamsema.schemas import (
    ArchConfig,
    ChannelConfig,
    ExperimentConfig,
    NoiseConfig,
    PredictorKind,
    SceneConfig,
    SplitSpec,
    TrainConfig,
)

SLOW = os.getenv("BEAMSEMA_SLOW_TESTS") == "1"

_QUICK = TrainConfig(batch_size=16, base_lr=1e-2, decay_epochs=(2,), decay_factor=0.1, total_epochs=3)


def _tiny_dataset(out_dir: Path, num_samples: int = 40, seed: int = 1) -> Path:
    scene = SceneConfig(
        image_width=160,
        image_height=90,
        focal_length=40.0,
        road_start=(-8.0, 10.0),
        road_end=(8.0, 10.0),
        num_distractors_range=(0, 1),
        num_samples=num_samples,
    )
    channel = ChannelConfig(num_antennas=4, num_beams=8, num_nlos_paths=1, nlos_gain_db=-20)
    noise = NoiseConfig(bbox_jitter=0.02, mask_flip_prob=0.05, gps_sigma=0.5)
    generate_dataset(scene, channel, noise, seed, out_dir, scenario="tiny")
    return out_dir


def _quick_config(dataset: Path, predictors=("bbox_mlp", "position_mlp", "mask_lenet"), **extra) -> ExperimentConfig:
    kinds = [PredictorKind(p) for p in predictors]
    return ExperimentConfig(dataset=str(dataset), predictors=tuple(kinds), train={k: _QUICK for k in kinds}, **extra)


class SplitTests(unittest.TestCase):
    def test_reference_split_sizes(self):
        self.assertEqual(split_counts(2300, SplitSpec()), (1610, 460, 230))
        self.assertEqual(split_counts(854, SplitSpec()), (598, 171, 85))

    def test_tiny_totals_keep_one_per_split(self):
        self.assertEqual(split_counts(3, SplitSpec()), (1, 1, 1))
        with self.assertRaises(SplitError):
            split_counts(2, SplitSpec())

    def test_split_is_a_seeded_partition(self):
        manifest = pd.DataFrame({"sample_id": range(50)})
        a = split_dataset(manifest, SplitSpec(seed=4))
        b = split_dataset(manifest, SplitSpec(seed=4))
        c = split_dataset(manifest, SplitSpec(seed=5))
        self.assertEqual(list(a["split"]), list(b["split"]))
        self.assertNotEqual(list(a["split"]), list(c["split"]))
        self.assertEqual(a["split"].value_counts().to_dict(), {"train": 35, "val": 10, "test": 5})
        self.assertNotIn("split", manifest.columns)


class TopKTests(unittest.TestCase):
    def setUp(self):
        self.logits = np.array([
            [4.0, 3.0, 2.0, 1.0],
            [4.0, 3.0, 2.0, 1.0],
            [1.0, 4.0, 3.0, 2.0],
            [1.0, 2.0, 3.0, 4.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        self.labels = np.array([0, 1, 1, 1, 2])

    def test_five_sample_fixture(self):
        self.assertAlmostEqual(topk_accuracy(self.logits, self.labels, 1), 40.0)
        self.assertAlmostEqual(topk_accuracy(self.logits, self.labels, 2), 60.0)
        self.assertAlmostEqual(topk_accuracy(self.logits, self.labels, 3), 100.0)

    def test_k_equal_to_classes_is_full_score(self):
        self.assertEqual(topk_accuracy(self.logits, self.labels, 4), 100.0)

    def test_ties_favor_lower_index(self):
        logits = np.zeros((2, 4))
        self.assertEqual(topk_accuracy(logits, np.array([0, 0]), 1), 100.0)
        self.assertEqual(topk_accuracy(logits, np.array([1, 1]), 1), 0.0)

    def test_invalid_arguments(self):
        with self.assertRaises(DomainError):
            topk_accuracy(self.logits, self.labels, 0)
        with self.assertRaises(DomainError):
            topk_accuracy(self.logits, self.labels, 5)
        with self.assertRaises(DomainError):
            topk_accuracy(np.zeros((0, 4)), np.zeros(0, dtype=int), 1)

    def test_evaluate_confusion_counts_every_sample(self):
        model = build_model((4,), [dense(4)], seed=0)
        model.store.params["0.weight"][...] = np.eye(4)
        model.store.params["0.bias"][...] = 0.0
        data = SplitData(x=np.eye(4), y=np.array([0, 1, 2, 0]), sample_ids=np.arange(4))
        metrics = evaluate(model, data)
        self.assertAlmostEqual(metrics.top1, 75.0)
        self.assertEqual(int(metrics.confusion.sum()), 4)
        self.assertEqual(metrics.confusion[0, 3], 1)


class KnnOracleTests(unittest.TestCase):
    def setUp(self):
        self.train = SplitData(
            x=np.array([[0, 0], [0, 1], [1, 0], [10, 10], [10, 11], [11, 10]], dtype=float),
            y=np.array([0, 0, 0, 1, 1, 1]),
            sample_ids=np.arange(6),
        )

    def test_majority_vote(self):
        test = SplitData(x=np.array([[0.2, 0.2], [10.5, 10.5]]), y=np.array([0, 1]), sample_ids=np.arange(2))
        self.assertEqual(knn_oracle(self.train, test, k=3), 100.0)
        wrong = SplitData(x=test.x, y=np.array([0, 0]), sample_ids=np.arange(2))
        self.assertEqual(knn_oracle(self.train, wrong, k=3), 50.0)

    def test_vote_tie_goes_to_lower_beam(self):
        train = SplitData(x=np.array([[0.0], [1.0]]), y=np.array([1, 0]), sample_ids=np.arange(2))
        test = SplitData(x=np.array([[0.4]]), y=np.array([0]), sample_ids=np.arange(1))
        self.assertEqual(knn_oracle(train, test, k=2), 100.0)

    def test_empty_split_raises(self):
        empty = SplitData(x=np.zeros((0, 2)), y=np.zeros(0, dtype=int), sample_ids=np.zeros(0, dtype=int))
        with self.assertRaises(DomainError):
            knn_oracle(self.train, empty)


class TrainModelTests(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(20, 4))
        y = np.arange(20) % 8
        self.data = SplitData(x=x, y=y, sample_ids=np.arange(20))

    def test_memorizes_twenty_samples(self):
        cfg = TrainConfig(batch_size=20, base_lr=1e-2, total_epochs=300)
        outcome = train_predictor(PredictorKind.BBOX_MLP, self.data, self.data, cfg, num_beams=8)
        self.assertEqual(evaluate(outcome.model, self.data).top1, 100.0)

    def test_restores_best_validation_epoch(self):
        rng = np.random.default_rng(1)
        val = SplitData(x=rng.normal(size=(10, 4)), y=rng.integers(0, 8, size=10), sample_ids=np.arange(10))
        cfg = TrainConfig(batch_size=4, base_lr=5e-2, decay_epochs=(5,), total_epochs=12)
        model = build_model((4,), [dense(16), relu(), dense(8)], seed=2)
        outcome = train_model(model, self.data, val, cfg)
        scores = [h.val_top1 for h in outcome.history]
        self.assertEqual(len(scores), 12)
        self.assertEqual(outcome.best_epoch, int(np.argmax(scores)))
        self.assertAlmostEqual(evaluate(outcome.model, val).top1, scores[outcome.best_epoch])
        self.assertEqual([h.lr for h in outcome.history[4:6]], [5e-2, 5e-2 * 0.1])

    def test_same_seed_same_parameters(self):
        cfg = TrainConfig(batch_size=6, base_lr=1e-2, total_epochs=4, seed=3)
        a = train_predictor(PredictorKind.BBOX_MLP, self.data, self.data, cfg, num_beams=8)
        b = train_predictor(PredictorKind.BBOX_MLP, self.data, self.data, cfg, num_beams=8)
        for name in a.model.store.params:
            np.testing.assert_array_equal(a.model.store.params[name], b.model.store.params[name])


class ExperimentTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmpdir = TemporaryDirectory()
        cls.root = Path(cls.tmpdir.name)
        cls.dataset = _tiny_dataset(cls.root / "tiny")

    @classmethod
    def tearDownClass(cls):
        cls.tmpdir.cleanup()

    def test_features_exclude_missed_and_fit_bounds_on_train(self):
        manifest = prepare_manifest(_quick_config(self.dataset))
        manifest.loc[0, "missed"] = 1
        bundle = load_features(self.dataset, manifest, [PredictorKind.POSITION_MLP, PredictorKind.MASK_LENET])
        total = sum(len(bundle.splits[PredictorKind.POSITION_MLP][s]) for s in ("train", "val", "test"))
        self.assertEqual(total, 39)
        self.assertEqual(bundle.num_beams, 8)
        self.assertEqual(bundle.image_size, (160, 90))
        self.assertEqual(bundle.splits[PredictorKind.MASK_LENET]["train"].x.shape[1:], (1, 32, 32))
        train_x = bundle.splits[PredictorKind.POSITION_MLP]["train"].x
        self.assertAlmostEqual(float(train_x.min()), 0.0)
        self.assertAlmostEqual(float(train_x.max()), 1.0)

    def test_run_writes_report_and_is_reproducible(self):
        cfg = _quick_config(self.dataset)
        out = self.root / "run_a"
        first = run_experiment(cfg, out)
        second = run_experiment(cfg, self.root / "run_b", threads=3)

        for name in ("bbox_mlp", "position_mlp", "mask_lenet"):
            a, b = first.predictors[name], second.predictors[name]
            self.assertEqual((a.top1, a.top2, a.top3), (b.top1, b.top2, b.top3))
            self.assertEqual([h.train_loss for h in a.history], [h.train_loss for h in b.history])
            self.assertTrue(a.top1 <= a.top2 <= a.top3)
        self.assertEqual(first.config_digest, config_digest(cfg))
        self.assertIn("knn_bbox_top1", first.oracles)
        self.assertEqual(first.predictors["bbox_mlp"].params, (4 * 175 + 175) + (175 * 175 + 175) + (175 * 8 + 8))

        for name in ("report.json", "tradeoff.csv", "manifest.csv", "dataset.json", runlog.EVENTS_FILE):
            self.assertTrue((out / name).exists(), name)
        self.assertTrue((out / "checkpoints" / "mask_lenet.npz").exists())
        self.assertEqual(load_report(out / "report.json"), first)
        self.assertEqual(tradeoff_table(first)[0].predictor, "position_mlp")
        self.assertEqual((out / "tradeoff.csv").read_text().splitlines()[0], "predictor,params,top1")

        summary = runlog.summarize(out / runlog.EVENTS_FILE)
        self.assertEqual(summary["recent_errors"], [])
        self.assertEqual(summary["by_stage"]["train"], {"start": 3, "ok": 3})

    def test_checkpoint_reproduces_reported_metrics(self):
        cfg = _quick_config(self.dataset, predictors=("position_mlp",))
        out = self.root / "ck"
        report = run_experiment(cfg, out)
        model = load_checkpoint(out / "checkpoints" / "position_mlp.npz")
        self.assertIn("position_bounds", model.meta)
        metrics = evaluate_checkpoint(cfg, model)
        self.assertEqual(metrics["top1"], report.predictors["position_mlp"].top1)

    def test_configured_split_overrides_dataset_split(self):
        cfg = _quick_config(self.dataset, split=SplitSpec(train=0.5, val=0.25, test=0.25, seed=9))
        manifest = prepare_manifest(cfg)
        self.assertEqual(manifest["split"].value_counts().to_dict(), {"train": 20, "val": 10, "test": 10})

    def test_missing_dataset_is_load_stage_error(self):
        cfg = _quick_config(self.root / "nope")
        with self.assertRaises(StageError) as ctx:
            run_experiment(cfg)
        self.assertEqual(ctx.exception.stage, "load")
        self.assertIn(str(self.root / "nope" / "manifest.csv"), str(ctx.exception))

    def test_sweep_averages_per_seed_results(self):
        cfg = _quick_config(self.dataset, predictors=("bbox_mlp",))
        out = self.root / "sweep"
        summary = sweep_seeds(cfg, [0, 1], out)
        per_seed = [summary["per_seed"][s]["bbox_mlp"] for s in ("0", "1")]
        self.assertAlmostEqual(summary["mean"]["bbox_mlp"]["top1"], sum(per_seed) / 2)
        self.assertTrue((out / "seed_0" / "report.json").exists())
        self.assertTrue((out / "seed_1" / "report.json").exists())
        self.assertEqual(json.loads((out / "sweep.json").read_text())["seeds"], [0, 1])
        with self.assertRaises(DomainError):
            sweep_seeds(cfg, [])

    def test_train_single_writes_checkpoint_and_history(self):
        cfg = _quick_config(self.dataset, predictors=("bbox_mlp",))
        out = self.root / "single"
        path = train_single(cfg, "bbox_mlp", out)
        self.assertEqual(path, out / "checkpoints" / "bbox_mlp.npz")
        history = json.loads((out / "bbox_mlp_history.json").read_text())
        self.assertEqual(len(history["history"]), _QUICK.total_epochs)
        metrics = evaluate_checkpoint(cfg, load_checkpoint(path))
        self.assertEqual(metrics["predictor"], "bbox_mlp")
        self.assertEqual(len(metrics["confusion"]), 8)

    def test_report_formats(self):
        report = run_experiment(_quick_config(self.dataset, predictors=("bbox_mlp", "position_mlp")))
        table = format_report_table(report)
        self.assertTrue(table.startswith("predictor"))
        self.assertIn("# oráculo knn_bbox_top1", table)
        rows = tradeoff_csv(tradeoff_table(report)).splitlines()
        self.assertEqual(len(rows), 3)
        self.assertTrue(rows[1].startswith("position_mlp,712,"))

    @unittest.skipUnless(SLOW, "defina BEAMSEMA_SLOW_TESTS=1 para rodar")
    def test_image_baseline_runs_end_to_end(self):
        one_epoch = TrainConfig(batch_size=16, base_lr=1e-3, total_epochs=1)
        cfg = ExperimentConfig(
            dataset=str(self.dataset),
            predictors=(PredictorKind.IMAGE_CNN_BASELINE, PredictorKind.BBOX_MLP),
            train={PredictorKind.IMAGE_CNN_BASELINE: one_epoch, PredictorKind.BBOX_MLP: one_epoch},
        )
        report = run_experiment(cfg)
        cnn = report.predictors["image_cnn_baseline"]
        self.assertGreater(cnn.params, 6 * report.predictors["bbox_mlp"].params)
        self.assertGreater(cnn.infer_ms_per_sample, 0.0)


class NoiselessRunTests(unittest.TestCase):
    """Via reta sem ruído: y do GPS constante, rótulo função determinística da caixa."""

    @classmethod
    def setUpClass(cls):
        cls.tmpdir = TemporaryDirectory()
        cls.root = Path(cls.tmpdir.name)
        scene = SceneConfig(
            image_width=160,
            image_height=90,
            focal_length=40.0,
            road_start=(-8.0, 10.0),
            road_end=(8.0, 10.0),
            num_distractors_range=(0, 1),
            num_samples=240,
        )
        channel = ChannelConfig(num_antennas=4, num_beams=8, num_nlos_paths=0)
        cls.dataset = cls.root / "clean"
        generate_dataset(scene, channel, NoiseConfig.zero(), 5, cls.dataset, scenario="clean")

    @classmethod
    def tearDownClass(cls):
        cls.tmpdir.cleanup()

    def test_every_predictor_runs_on_a_constant_coordinate_road(self):
        small_cnn = ArchConfig(raster_width=32, raster_height=16, cnn_filters=(4, 8), cnn_dense_units=800)
        cfg = _quick_config(
            self.dataset,
            predictors=("bbox_mlp", "mask_lenet", "position_mlp", "image_cnn_baseline"),
            arch=small_cnn,
        )
        out = self.root / "all"
        report = run_experiment(cfg, out)

        self.assertEqual(set(report.predictors), {k.value for k in cfg.predictors})
        self.assertEqual(report.position_bounds[1], [9.5, 10.5])
        for result in report.predictors.values():
            self.assertTrue(result.top1 <= result.top2 <= result.top3)

        model = load_checkpoint(out / "checkpoints" / "bbox_mlp.npz")
        self.assertEqual(len(model.meta["bbox_mean"]), 4)
        self.assertEqual(len(model.meta["bbox_std"]), 4)
        self.assertEqual(evaluate_checkpoint(cfg, model)["top1"], report.predictors["bbox_mlp"].top1)

    def test_bbox_features_are_standardized_on_train(self):
        manifest = prepare_manifest(_quick_config(self.dataset))
        bundle = load_features(self.dataset, manifest, [PredictorKind.BBOX_MLP])
        train_x = bundle.splits[PredictorKind.BBOX_MLP]["train"].x
        np.testing.assert_allclose(train_x[:, 0].mean(), 0.0, atol=1e-9)
        np.testing.assert_allclose(train_x[:, 0].std(), 1.0)
        self.assertEqual(len(bundle.bbox_stats.std), 4)

    def test_bbox_mlp_learns_the_clean_mapping(self):
        cfg = ExperimentConfig(
            dataset=str(self.dataset),
            predictors=(PredictorKind.BBOX_MLP,),
            train={PredictorKind.BBOX_MLP: TrainConfig(batch_size=16, base_lr=1e-2, decay_epochs=(30,), total_epochs=60)},
        )
        report = run_experiment(cfg)
        bbox = report.predictors["bbox_mlp"]
        self.assertGreaterEqual(bbox.top1, 85.0)
        self.assertGreaterEqual(bbox.top3, 95.0)
        self.assertGreaterEqual(bbox.top1, report.oracles["knn_bbox_top1"] - 10.0)


@unittest.skipUnless(SLOW, "defina BEAMSEMA_SLOW_TESTS=1 para rodar")
class PresetAcceptanceTests(unittest.TestCase):
    """Presets completos: gera datasets de tamanho real e treina com as configs padrão."""

    @classmethod
    def setUpClass(cls):
        cls.tmpdir = TemporaryDirectory()
        cls.root = Path(cls.tmpdir.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmpdir.cleanup()

    def _generate(self, name: str, noiseless: bool = False, seed: int = 0) -> Path:
        preset = load_preset(name, noiseless=noiseless)
        out = self.root / f"{name}_{'clean' if noiseless else 'noisy'}_{seed}"
        if not (out / "manifest.csv").exists():
            generate_dataset(preset.scene, preset.channel, preset.noise, seed, out,
                             scenario=preset.name, split=preset.split, threads=4)
        return out

    def test_stored_labels_pass_audit_on_both_presets(self):
        for name in list_presets():
            self.assertEqual(audit_labels(self._generate(name)), 0, name)

    def test_bbox_mlp_learns_noiseless_scenario5(self):
        dataset = self._generate("scenario5", noiseless=True)
        cfg = ExperimentConfig(dataset=str(dataset), predictors=(PredictorKind.BBOX_MLP,))
        manifest = prepare_manifest(cfg)
        self.assertEqual(manifest["split"].value_counts().to_dict(), {"train": 1610, "val": 460, "test": 230})

        report = run_experiment(cfg)
        bbox = report.predictors["bbox_mlp"]
        self.assertGreaterEqual(bbox.top1, 90.0)
        self.assertGreaterEqual(bbox.top3, 99.0)
        self.assertGreaterEqual(bbox.top1, report.oracles["knn_bbox_top1"] - 3.0)

    def test_semantic_predictors_keep_their_ordering_across_seeds(self):
        dataset = self._generate("scenario5")
        cfg = ExperimentConfig(
            dataset=str(dataset),
            predictors=(PredictorKind.BBOX_MLP, PredictorKind.MASK_LENET, PredictorKind.POSITION_MLP),
        )
        mean = sweep_seeds(cfg, [0, 1, 2, 3, 4], threads=3)["mean"]
        self.assertGreaterEqual(mean["bbox_mlp"]["top1"], mean["mask_lenet"]["top1"])
        self.assertGreaterEqual(mean["mask_lenet"]["top1"], mean["position_mlp"]["top1"])

    def test_gen_and_run_twice_are_identical(self):
        outputs = []
        for tag in ("a", "b"):
            data = self.root / f"cli_{tag}"
            self.assertEqual(cli_main(["gen", "--preset", "scenario7", "--out", str(data), "--seed", "3"]), 0)
            config = self.root / f"exp_{tag}.ini"
            config.write_text(
                "[experiment]\n"
                f"dataset = {data}\n"
                "predictors = bbox_mlp, position_mlp\n"
                "seed = 3\n",
                encoding="utf-8",
            )
            run_dir = self.root / f"run_{tag}"
            self.assertEqual(cli_main(["run", "--config", str(config), "--out", str(run_dir)]), 0)
            report = load_report(run_dir / "report.json")
            outputs.append((
                (data / "manifest.csv").read_bytes(),
                {name: (r.top1, r.top2, r.top3) for name, r in report.predictors.items()},
            ))
        self.assertEqual(outputs[0], outputs[1])


if __name__ == "__main__":
    unittest.main()
