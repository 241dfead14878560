import os
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import patch

import numpy as np

try:
    from fastapi.testclient import TestClient  # type: ignore
except Exception:  # pragma: no cover
    TestClient = None  # type: ignore

try:
    from beamsema.main import _MODEL_CACHE_SIZE, _cached_checkpoint, app  # type: ignore
except Exception:  # pragma: no cover
    app = None  # type: ignore

from beamsema import runlog
from beamsema.harness import report_json
from beamsema.nn import forward, save_checkpoint, softmax
from beamsema.predictors import build_bbox_mlp
from beamsema.scene_sim import PixelBBox
from beamsema.schemas import ExperimentReport, PredictorResult
from beamsema.semantics import FeatureStats, bbox_vector, standardize


@unittest.skipIf(TestClient is None or app is None, "Dependências FastAPI não disponíveis no ambiente")
class ReportApiTests(unittest.TestCase):
    def setUp(self):
        self.tmpdir = TemporaryDirectory()
        self.root = Path(self.tmpdir.name)
        self.env = patch.dict(os.environ, {"BEAMSEMA_REPORTS_DIR": str(self.root)})
        self.env.start()
        self.client = TestClient(app)  # type: ignore

        run = self.root / "run1"
        run.mkdir()
        report = ExperimentReport(
            seed=0,
            config_digest="d",
            dataset="data/x",
            num_beams=8,
            predictors={
                "bbox_mlp": PredictorResult(top1=40.0, top2=60.0, top3=70.0, params=32783),
                "position_mlp": PredictorResult(top1=20.0, top2=30.0, top3=40.0, params=712),
            },
        )
        (run / "report.json").write_text(report_json(report), encoding="utf-8")
        model = build_bbox_mlp(8, seed=0)
        head = len(model.layers) - 1
        model.store.params[f"{head}.weight"][...] = 0.0
        model.store.params[f"{head}.bias"][...] = np.arange(8, dtype=float)
        model.meta["image_size"] = [160, 90]
        self.model = model
        self.ckpt = save_checkpoint(model, run / "checkpoints" / "bbox_mlp.npz")
        runlog.record_event(run / runlog.EVENTS_FILE, "r1", "train", "error", "bbox_mlp", error="boom")

    def tearDown(self):
        self.env.stop()
        self.tmpdir.cleanup()

    def test_healthz(self):
        self.assertEqual(self.client.get("/healthz").json(), {"status": "ok"})

    def test_lists_and_reads_reports(self):
        self.assertEqual(self.client.get("/reports").json(), ["run1"])
        data = self.client.get("/reports/run1").json()
        self.assertEqual(data["num_beams"], 8)
        self.assertIn("bbox_mlp", data["predictors"])

    def test_unknown_report_is_404(self):
        self.assertEqual(self.client.get("/reports/nada").status_code, 404)

    def test_tradeoff_sorted_by_params(self):
        rows = self.client.get("/reports/run1/tradeoff").json()
        self.assertEqual([r["predictor"] for r in rows], ["position_mlp", "bbox_mlp"])

    def test_events_summary(self):
        data = self.client.get("/reports/run1/events").json()
        self.assertEqual(data["events_count"], 1)
        self.assertEqual(data["recent_errors"][0]["error"], "boom")

    def test_predict_bbox_ranks_beams(self):
        resp = self.client.post("/reports/run1/predict/bbox", json={"x_c": 80, "y_c": 45, "w": 20, "h": 10, "k": 3})
        self.assertEqual(resp.status_code, 200)
        data = resp.json()
        self.assertEqual(data["beams"], [7, 6, 5])
        self.assertTrue(data["scores"][0] > data["scores"][1] > data["scores"][2])

    def test_predict_uses_image_size_from_checkpoint(self):
        inside_default_frame = {"x_c": 320, "y_c": 180, "w": 40, "h": 20}
        resp = self.client.post("/reports/run1/predict/bbox", json=inside_default_frame)
        self.assertEqual(resp.status_code, 422)
        resp = self.client.post(
            "/reports/run1/predict/bbox", json={**inside_default_frame, "image_width": 640, "image_height": 360}
        )
        self.assertEqual(resp.status_code, 200)

    def test_predict_applies_stored_standardization(self):
        run = self.root / "run2"
        run.mkdir()
        (run / "report.json").write_text((self.root / "run1" / "report.json").read_text(encoding="utf-8"), encoding="utf-8")
        model = build_bbox_mlp(8, seed=3)
        model.meta.update({"image_size": [160, 90], "bbox_mean": [0.5, 0.6, 0.1, 0.2], "bbox_std": [0.2, 0.01, 0.05, 0.05]})
        save_checkpoint(model, run / "checkpoints" / "bbox_mlp.npz")

        resp = self.client.post("/reports/run2/predict/bbox", json={"x_c": 60, "y_c": 50, "w": 12, "h": 8, "k": 8})
        self.assertEqual(resp.status_code, 200)
        x = standardize(
            bbox_vector(PixelBBox(60, 50, 12, 8), 160, 90),
            FeatureStats(mean=(0.5, 0.6, 0.1, 0.2), std=(0.2, 0.01, 0.05, 0.05)),
        )
        probs = softmax(forward(model, x[None, :]))[0]
        data = resp.json()
        np.testing.assert_allclose(data["scores"], probs[data["beams"]])

    def test_rewritten_checkpoint_is_reloaded_and_cache_is_bounded(self):
        self.assertEqual(_cached_checkpoint.cache_info().maxsize, _MODEL_CACHE_SIZE)
        body = {"x_c": 80, "y_c": 45, "w": 20, "h": 10, "k": 3}
        self.assertEqual(self.client.post("/reports/run1/predict/bbox", json=body).json()["beams"], [7, 6, 5])

        head = len(self.model.layers) - 1
        self.model.store.params[f"{head}.bias"][...] = -np.arange(8, dtype=float)
        save_checkpoint(self.model, self.ckpt)
        stat = self.ckpt.stat()
        os.utime(self.ckpt, ns=(stat.st_atime_ns, stat.st_mtime_ns + 1_000_000_000))
        self.assertEqual(self.client.post("/reports/run1/predict/bbox", json=body).json()["beams"], [0, 1, 2])

    def test_predict_rejects_box_outside_image(self):
        resp = self.client.post("/reports/run1/predict/bbox", json={"x_c": 9999, "y_c": 10, "w": 4, "h": 4})
        self.assertEqual(resp.status_code, 422)

    def test_predict_without_checkpoint_is_404(self):
        (self.root / "run1" / "checkpoints" / "bbox_mlp.npz").unlink()
        resp = self.client.post("/reports/run1/predict/bbox", json={"x_c": 1, "y_c": 1, "w": 4, "h": 4})
        self.assertEqual(resp.status_code, 404)


if __name__ == "__main__":
    unittest.main()
