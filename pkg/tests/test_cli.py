import contextlib
import json
import io
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import patch

import pandas as pd

from beamsema.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from beamsema.harness import report_json
from beamsema.pgm import DatasetIOError
from beamsema.schemas import ExperimentReport, PredictorResult


def _report() -> ExperimentReport:
    return ExperimentReport(
        seed=0,
        config_digest="abc",
        dataset="data/scenario5",
        num_beams=64,
        predictors={
            "bbox_mlp": PredictorResult(top1=50.5, top2=70.0, top3=80.25, params=42939),
            "position_mlp": PredictorResult(top1=30.0, top2=45.0, top3=55.0, params=4352),
        },
        oracles={"knn_bbox_top1": 48.0},
    )


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class CliTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = TemporaryDirectory()
        self.root = Path(self.tmpdir.name)

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_unknown_preset_is_usage_error(self):
        code, _, err = _run(["gen", "--preset", "scenario99", "--out", str(self.root / "d")])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("scenario5", err)
        self.assertFalse((self.root / "d").exists())

    def test_missing_required_flag_is_usage_error(self):
        code, _, _ = _run(["gen", "--out", str(self.root / "d")])
        self.assertEqual(code, EXIT_USAGE)

    def test_report_table_and_csv(self):
        path = self.root / "report.json"
        path.write_text(report_json(_report()), encoding="utf-8")

        code, out, _ = _run(["report", "--in", str(path)])
        self.assertEqual(code, EXIT_OK)
        lines = out.splitlines()
        self.assertEqual(lines[0], "predictor params top1 top2 top3")
        self.assertTrue(lines[1].startswith("position_mlp"))
        self.assertIn("50.50", lines[2])

        code, first, _ = _run(["report", "--in", str(path), "--format", "csv"])
        _, second, _ = _run(["report", "--in", str(path), "--format", "csv"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(first, second)
        self.assertEqual(first.splitlines()[0], "predictor,params,top1,top2,top3")
        self.assertEqual(first.splitlines()[2], "bbox_mlp,42939,50.500000,70.000000,80.250000")

    def test_report_json_is_keyed_by_predictor(self):
        data = json.loads(report_json(_report()))
        self.assertEqual(set(data), {"bbox_mlp", "position_mlp", "_run"})
        self.assertEqual(data["bbox_mlp"]["params"], 42939)
        self.assertEqual(data["_run"]["oracles"], {"knn_bbox_top1": 48.0})

    def test_report_without_run_block_is_readable(self):
        path = self.root / "plain.json"
        path.write_text(
            json.dumps({"bbox_mlp": {"top1": 50.0, "top2": 60.0, "top3": 70.0, "params": 42939,
                                     "train_s": 1.0, "infer_ms_per_sample": 0.1}}),
            encoding="utf-8",
        )
        code, out, _ = _run(["report", "--in", str(path), "--format", "csv"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.splitlines()[1], "bbox_mlp,42939,50.000000,60.000000,70.000000")

    def test_malformed_report_is_usage_error(self):
        path = self.root / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        code, _, err = _run(["report", "--in", str(path)])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("broken.json", err)

    def test_run_on_missing_dataset_names_the_manifest(self):
        dataset = self.root / "nada"
        config = self.root / "exp.ini"
        config.write_text(
            "[experiment]\n"
            f"dataset = {dataset}\n"
            "predictors = bbox_mlp\n",
            encoding="utf-8",
        )
        code, _, err = _run(["run", "--config", str(config), "--out", str(self.root / "out")])
        self.assertEqual(code, EXIT_RUNTIME)
        self.assertIn("load", err)
        self.assertIn(str(dataset / "manifest.csv"), err)

    def test_invalid_experiment_config_is_usage_error(self):
        config = self.root / "exp.ini"
        config.write_text("[experiment]\ndataset = x\npredictors = bbox_mlp, bbox_mlp\n", encoding="utf-8")
        code, _, _ = _run(["run", "--config", str(config), "--out", str(self.root / "out")])
        self.assertEqual(code, EXIT_USAGE)

    def test_bad_seed_list_is_usage_error(self):
        config = self.root / "exp.ini"
        config.write_text("[experiment]\ndataset = x\n", encoding="utf-8")
        code, _, _ = _run(["run", "--config", str(config), "--out", str(self.root / "o"), "--seeds", "0,a"])
        self.assertEqual(code, EXIT_USAGE)

    def test_eval_with_missing_checkpoint_is_usage_error(self):
        code, _, _ = _run(["eval", "--checkpoint", str(self.root / "none.npz")])
        self.assertEqual(code, EXIT_USAGE)

    def test_empty_seed_list_is_usage_error(self):
        config = self.root / "exp.ini"
        config.write_text("[experiment]\ndataset = x\n", encoding="utf-8")
        code, _, err = _run(["run", "--config", str(config), "--out", str(self.root / "o"), "--seeds", ","])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("vazia", err)
        self.assertFalse((self.root / "o").exists())

    def test_unknown_detector_is_usage_error(self):
        code, _, _ = _run(["gen", "--preset", "scenario5", "--detector", "yolo", "--out", str(self.root / "d")])
        self.assertEqual(code, EXIT_USAGE)

    def test_unreadable_dataset_during_audit_is_runtime_error(self):
        out = self.root / "d"
        with patch("beamsema.cli.generate_dataset", return_value=pd.DataFrame({"sample_id": [0]})) as gen, \
                patch("beamsema.cli.audit_labels", side_effect=DatasetIOError(f"poses ilegíveis em {out}")):
            code, _, err = _run(["gen", "--preset", "scenario5", "--detector", "large", "--out", str(out), "--audit"])
        self.assertEqual(code, EXIT_RUNTIME)
        self.assertIn("audit", err)
        noise = gen.call_args.args[2]
        self.assertEqual(noise.mask_flip_prob, 0.05)


if __name__ == "__main__":
    unittest.main()
