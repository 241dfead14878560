# beamsema/main.py
from __future__ import annotations

import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List

from fastapi import FastAPI, HTTPException
from loguru import logger

from beamsema import runlog
from beamsema.config import reports_dir, settings
from beamsema.harness import load_report, tradeoff_table
from beamsema.nn.checkpoint import CheckpointError, load_checkpoint
from beamsema.nn.layers import Model, forward, softmax
from beamsema.scene_sim import PixelBBox
from beamsema.schemas import BBoxPredictRequest, BeamPrediction, ExperimentReport, PredictorKind, TradeoffRow
from beamsema.semantics import FeatureStats, bbox_vector, standardize

logger.remove()
logger.add(sys.stderr, level=settings.LOG_LEVEL)
if settings.LOG_FILE:
    logger.add(settings.LOG_FILE, rotation="10 MB", retention=5, enqueue=True)

app = FastAPI(title="beamsema", version="0.1.0")

_MODEL_CACHE_SIZE = 8


def _report_dir(name: str) -> Path:
    base = Path(reports_dir())
    path = (base / name).resolve()
    if base.resolve() not in path.parents or not (path / "report.json").exists():
        raise HTTPException(status_code=404, detail=f"Relatório '{name}' não encontrado")
    return path


@lru_cache(maxsize=_MODEL_CACHE_SIZE)
def _cached_checkpoint(path: str, mtime_ns: int) -> Model:
    # mtime na chave: checkpoint regravado é recarregado
    model = load_checkpoint(path)
    logger.info(f"[API] checkpoint carregado: {path}")
    return model


def _load_bbox_model(report: Path) -> Model:
    ckpt = report / "checkpoints" / f"{PredictorKind.BBOX_MLP.value}.npz"
    if not ckpt.exists():
        raise HTTPException(status_code=404, detail=f"Checkpoint bbox_mlp ausente em '{report.name}'")
    try:
        return _cached_checkpoint(str(ckpt), ckpt.stat().st_mtime_ns)
    except CheckpointError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc


@app.get("/healthz")
def healthz() -> Dict[str, str]:
    return {"status": "ok"}


@app.get("/reports", response_model=List[str])
def list_reports() -> List[str]:
    base = Path(reports_dir())
    if not base.exists():
        return []
    return sorted(p.name for p in base.iterdir() if (p / "report.json").exists())


@app.get("/reports/{name}", response_model=ExperimentReport)
def get_report(name: str) -> ExperimentReport:
    path = _report_dir(name)
    try:
        return load_report(path / "report.json")
    except (OSError, ValueError) as exc:
        raise HTTPException(status_code=500, detail=f"Relatório '{name}' ilegível") from exc


@app.get("/reports/{name}/tradeoff", response_model=List[TradeoffRow])
def get_tradeoff(name: str) -> List[TradeoffRow]:
    return tradeoff_table(get_report(name))


@app.get("/reports/{name}/events")
def get_events(name: str) -> Dict[str, Any]:
    path = _report_dir(name)
    return runlog.summarize(path / runlog.EVENTS_FILE)


@app.post("/reports/{name}/predict/bbox", response_model=BeamPrediction)
def predict_bbox(name: str, body: BBoxPredictRequest) -> BeamPrediction:
    model = _load_bbox_model(_report_dir(name))
    default_w, default_h = model.meta.get("image_size", (640, 360))
    width = body.image_width or int(default_w)
    height = body.image_height or int(default_h)
    if body.x_c > width or body.y_c > height:
        raise HTTPException(status_code=422, detail=f"centro da caixa fora da imagem {width}x{height}")

    x = bbox_vector(PixelBBox(body.x_c, body.y_c, body.w, body.h), width, height)
    if "bbox_mean" in model.meta and "bbox_std" in model.meta:
        x = standardize(x, FeatureStats(mean=tuple(model.meta["bbox_mean"]), std=tuple(model.meta["bbox_std"])))
    probs = softmax(forward(model, x[None, :]))[0]
    k = min(body.k, probs.shape[0])
    order = sorted(range(probs.shape[0]), key=lambda q: (-probs[q], q))[:k]
    return BeamPrediction(beams=order, scores=[float(probs[q]) for q in order])
