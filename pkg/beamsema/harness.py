# beamsema/harness.py
from __future__ import annotations

import hashlib
import json
import math
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from beamsema import runlog
from beamsema.config import resolve_threads, settings
from beamsema.errors import DomainError
from beamsema.nn.checkpoint import save_checkpoint
from beamsema.nn.layers import Model, forward, loss_and_grad, param_count
from beamsema.nn.optim import adam_step, lr_at_epoch, restore, snapshot
from beamsema.pgm import DatasetIOError, read_pgm
from beamsema.predictors import build_predictor
from beamsema.scenarios import train_config_for
from beamsema.scene_sim import PixelBBox, load_dataset_meta, read_manifest
from beamsema.semantics import (
    FeatureStats,
    PositionBounds,
    bbox_vector,
    downsample_mask,
    downsize_raster,
    fit_position_bounds,
    fit_standardizer,
    normalize_position,
    standardize,
)
from beamsema.schemas import (
    ArchConfig,
    EpochRecord,
    ExperimentConfig,
    ExperimentReport,
    PredictorKind,
    PredictorResult,
    SplitSpec,
    TradeoffRow,
    TrainConfig,
)

SPLITS = ("train", "val", "test")
_EVAL_BATCH = 64


class SplitError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class StageError(RuntimeError):
    """Falha em um estágio do experimento; a mensagem nomeia estágio e preditor."""

    def __init__(self, stage: str, message: str, predictor: Optional[str] = None):
        self.stage = stage
        self.predictor = predictor
        where = f"{stage}/{predictor}" if predictor else stage
        super().__init__(f"[{where}] {message}")


# --------------------------------------------------------------------------------------
# Split
# --------------------------------------------------------------------------------------

def split_counts(total: int, spec: SplitSpec) -> Tuple[int, int, int]:
    """val e test arredondados ao inteiro mais próximo (mínimo 1); o restante vai para treino."""
    if total < 3:
        raise SplitError(f"são necessárias ao menos 3 amostras para dividir, recebido {total}")
    n_val = max(1, int(math.floor(total * spec.val + 0.5)))
    n_test = max(1, int(math.floor(total * spec.test + 0.5)))
    n_train = total - n_val - n_test
    if n_train < 1:
        raise SplitError(f"split sem amostras de treino para U={total} e {spec}")
    return n_train, n_val, n_test


def split_dataset(manifest: pd.DataFrame, spec: SplitSpec) -> pd.DataFrame:
    """Atribuição uniforme por embaralhamento com semente; devolve uma cópia com a coluna `split`."""
    total = len(manifest)
    n_train, n_val, _ = split_counts(total, spec)
    order = np.random.default_rng(spec.seed).permutation(total)
    tags = np.empty(total, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train:n_train + n_val]] = "val"
    tags[order[n_train + n_val:]] = "test"
    tagged = manifest.copy()
    tagged["split"] = tags
    return tagged


# --------------------------------------------------------------------------------------
# Features
# --------------------------------------------------------------------------------------

@dataclass
class SplitData:
    x: np.ndarray
    y: np.ndarray
    sample_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.y.shape[0])


@dataclass
class FeatureBundle:
    splits: Dict[PredictorKind, Dict[str, SplitData]]
    num_beams: int
    image_size: Tuple[int, int]                  # (W, H)
    position_bounds: Optional[PositionBounds] = None
    bbox_stats: Optional[FeatureStats] = None


def _features_for(
    kind: PredictorKind,
    rows: pd.DataFrame,
    dataset_dir: Path,
    image_size: Tuple[int, int],
    arch: ArchConfig,
    bounds,
) -> np.ndarray:
    width, height = image_size
    if kind is PredictorKind.BBOX_MLP:
        return np.stack([
            bbox_vector(PixelBBox(r.bbox_xc, r.bbox_yc, r.bbox_w, r.bbox_h), width, height)
            for r in rows.itertuples(index=False)
        ]) if len(rows) else np.zeros((0, 4))
    if kind is PredictorKind.POSITION_MLP:
        pos = rows[["pos_x", "pos_y"]].to_numpy(dtype=np.float64)
        return normalize_position(pos, bounds) if len(rows) else np.zeros((0, 2))
    if kind is PredictorKind.MASK_LENET:
        grids = [
            downsample_mask(read_pgm(dataset_dir / p), arch.mask_width, arch.mask_height)
            for p in rows["mask_path"]
        ]
        shape = (1, arch.mask_height, arch.mask_width)
    else:
        grids = [
            downsize_raster(read_pgm(dataset_dir / p) / 255.0, arch.raster_width, arch.raster_height)
            for p in rows["raster_path"]
        ]
        shape = (1, arch.raster_height, arch.raster_width)
    if not grids:
        return np.zeros((0, *shape))
    return np.stack(grids)[:, None, :, :]


def _fitted_bounds(fitted: Dict) -> Optional[PositionBounds]:
    raw = fitted.get("position_bounds")
    return (tuple(raw[0]), tuple(raw[1])) if raw else None


def _fitted_stats(fitted: Dict) -> Optional[FeatureStats]:
    if "bbox_mean" not in fitted or "bbox_std" not in fitted:
        return None
    return FeatureStats(mean=tuple(fitted["bbox_mean"]), std=tuple(fitted["bbox_std"]))


def load_features(
    dataset_dir: Path | str,
    manifest: pd.DataFrame,
    kinds: Iterable[PredictorKind],
    arch: ArchConfig | None = None,
    fitted: Optional[Dict] = None,
) -> FeatureBundle:
    """
    Entradas semânticas de cada preditor pedido, por split. Amostras perdidas pelo
    detector ficam de fora; limites de posição e a padronização da caixa vêm só do
    split de treino, a menos que `fitted` (meta de um checkpoint) já os traga.
    """
    dataset_dir = Path(dataset_dir)
    arch = arch or ArchConfig()
    fitted = fitted or {}
    meta = load_dataset_meta(dataset_dir)
    image_size = (int(meta["scene"]["image_width"]), int(meta["scene"]["image_height"]))
    num_beams = int(meta["channel"]["num_beams"])

    kept = manifest[manifest["missed"].astype(int) == 0]
    dropped = len(manifest) - len(kept)
    if dropped:
        logger.info(f"[HARNESS] {dropped} amostras perdidas pelo detector excluídas")
    by_split = {name: kept[kept["split"] == name] for name in SPLITS}

    bounds = None
    kinds = [PredictorKind(k) for k in kinds]
    if PredictorKind.POSITION_MLP in kinds:
        bounds = _fitted_bounds(fitted) or fit_position_bounds(
            by_split["train"][["pos_x", "pos_y"]].to_numpy(dtype=np.float64)
        )

    splits: Dict[PredictorKind, Dict[str, SplitData]] = {}
    for kind in kinds:
        splits[kind] = {}
        for name, rows in by_split.items():
            x = _features_for(kind, rows, dataset_dir, image_size, arch, bounds)
            splits[kind][name] = SplitData(
                x=x,
                y=rows["beam_index"].to_numpy(dtype=np.int64),
                sample_ids=rows["sample_id"].to_numpy(dtype=np.int64),
            )
        logger.debug(
            f"[HARNESS] features {kind.value}: "
            + ", ".join(f"{n}={len(splits[kind][n])}" for n in SPLITS)
        )

    stats = None
    if PredictorKind.BBOX_MLP in kinds:
        bbox = splits[PredictorKind.BBOX_MLP]
        stats = _fitted_stats(fitted) or fit_standardizer(bbox["train"].x)
        for data in bbox.values():
            data.x = standardize(data.x, stats)
    return FeatureBundle(
        splits=splits,
        num_beams=num_beams,
        image_size=image_size,
        position_bounds=bounds,
        bbox_stats=stats,
    )


# --------------------------------------------------------------------------------------
# Métricas
# --------------------------------------------------------------------------------------

def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Percentual de linhas cujo rótulo está entre os k maiores logits (empate -> menor índice)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise DomainError("topk_accuracy exige ao menos uma amostra")
    n, q = logits.shape
    if not (1 <= k <= q):
        raise DomainError(f"k={k} fora de [1, {q}]")
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    hits = (order == labels[:, None]).any(axis=1)
    return 100.0 * float(hits.mean())


def predict_logits(model: Model, x: np.ndarray, batch: int = _EVAL_BATCH) -> np.ndarray:
    if len(x) == 0:
        return np.zeros((0, model.output_shape[0]))
    return np.concatenate([forward(model, x[i:i + batch]) for i in range(0, len(x), batch)])


@dataclass
class Metrics:
    top1: float
    top2: float
    top3: float
    confusion: np.ndarray

    def as_dict(self) -> Dict:
        return {
            "top1": self.top1,
            "top2": self.top2,
            "top3": self.top3,
            "confusion": self.confusion.tolist(),
        }


def evaluate(model: Model, data: SplitData) -> Metrics:
    if len(data) == 0:
        raise DomainError("split de avaliação vazio")
    logits = predict_logits(model, data.x)
    q = logits.shape[1]
    tops = [topk_accuracy(logits, data.y, min(k, q)) for k in (1, 2, 3)]
    confusion = np.zeros((q, q), dtype=np.int64)
    np.add.at(confusion, (data.y, np.argmax(logits, axis=1)), 1)
    return Metrics(top1=tops[0], top2=tops[1], top3=tops[2], confusion=confusion)


def knn_oracle(train: SplitData, test: SplitData, k: int = 3, num_beams: Optional[int] = None) -> float:
    """Top-1 (%) de um voto majoritário k-NN sobre vetores de caixa; empates -> menor feixe."""
    if len(train) == 0 or len(test) == 0:
        raise DomainError("knn_oracle exige treino e teste não vazios")
    k = min(k, len(train))
    q = int(num_beams or (max(train.y.max(), test.y.max()) + 1))
    correct = 0
    for start in range(0, len(test), 256):
        chunk = test.x[start:start + 256]
        d2 = ((chunk[:, None, :] - train.x[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = train.y[nearest]
        for row, label in zip(votes, test.y[start:start + 256]):
            if int(np.argmax(np.bincount(row, minlength=q))) == int(label):
                correct += 1
    return 100.0 * correct / len(test)


# --------------------------------------------------------------------------------------
# Treino
# --------------------------------------------------------------------------------------

@dataclass
class TrainOutcome:
    model: Model
    history: List[EpochRecord]
    best_epoch: int
    train_s: float


def train_model(
    model: Model,
    train: SplitData,
    val: SplitData,
    cfg: TrainConfig,
    progress: bool = False,
    label: str = "",
) -> TrainOutcome:
    """
    total_epochs épocas com o agendamento de lr; ao fim de cada época mede top-1 na
    validação e, no final, restaura os parâmetros da melhor época (empate -> a mais cedo).
    """
    if len(train) == 0:
        raise TrainingError("split de treino vazio")
    if len(val) == 0:
        raise TrainingError("split de validação vazio")

    rng = np.random.default_rng([cfg.seed, 1])
    history: List[EpochRecord] = []
    best_top1 = -1.0
    best_epoch = 0
    best = snapshot(model.store)
    started = time.perf_counter()

    epochs = tqdm(range(cfg.total_epochs), disable=not progress, desc=label or "treino", leave=False)
    for epoch in epochs:
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(len(train))
        total_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grad(model, train.x[idx], train.y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"perda não finita na época {epoch}")
            adam_step(model.store, grads, lr)
            total_loss += loss * len(idx)
        val_top1 = topk_accuracy(predict_logits(model, val.x), val.y, 1)
        history.append(EpochRecord(epoch=epoch, lr=lr, train_loss=total_loss / len(train), val_top1=val_top1))
        if val_top1 > best_top1:
            best_top1, best_epoch = val_top1, epoch
            best = snapshot(model.store)
        logger.debug(f"[TREINO] {label} época {epoch}: lr={lr:.2e} loss={total_loss / len(train):.4f} val_top1={val_top1:.2f}")

    restore(model.store, best)
    elapsed = time.perf_counter() - started
    logger.info(f"[TREINO] {label} melhor época {best_epoch} (val top-1 {best_top1:.2f}%) em {elapsed:.1f}s")
    return TrainOutcome(model=model, history=history, best_epoch=best_epoch, train_s=elapsed)


def train_predictor(
    kind: PredictorKind | str,
    train: SplitData,
    val: SplitData,
    cfg: TrainConfig,
    num_beams: int,
    arch: ArchConfig | None = None,
    progress: bool = False,
) -> TrainOutcome:
    kind = PredictorKind(kind)
    model = build_predictor(kind, num_beams, arch, seed=cfg.seed)
    return train_model(model, train, val, cfg, progress=progress, label=kind.value)


def time_inference(model: Model, x: np.ndarray, repeats: int | None = None) -> float:
    """Mediana (ms por amostra) de `repeats` passagens completas."""
    repeats = repeats or settings.INFER_REPEATS
    if len(x) == 0:
        return 0.0
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict_logits(model, x)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples)) * 1000.0 / len(x)


# --------------------------------------------------------------------------------------
# Experimento
# --------------------------------------------------------------------------------------

def config_digest(cfg: ExperimentConfig) -> str:
    payload = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def prepare_manifest(cfg: ExperimentConfig) -> pd.DataFrame:
    """Lê o manifesto do dataset e aplica o split da config, se houver."""
    manifest = read_manifest(cfg.dataset)
    if cfg.split is not None:
        return split_dataset(manifest, cfg.split)
    if "split" not in manifest or (manifest["split"].astype(str) == "").any():
        return split_dataset(manifest, SplitSpec(seed=cfg.seed))
    return manifest


def _train_config(cfg: ExperimentConfig, kind: PredictorKind) -> TrainConfig:
    return train_config_for(cfg, kind)


def _checkpoint_meta(bundle: FeatureBundle, kind: PredictorKind) -> Dict:
    meta: Dict = {"image_size": list(bundle.image_size)}
    if kind is PredictorKind.POSITION_MLP and bundle.position_bounds is not None:
        meta["position_bounds"] = [list(b) for b in bundle.position_bounds]
    if kind is PredictorKind.BBOX_MLP and bundle.bbox_stats is not None:
        meta["bbox_mean"] = list(bundle.bbox_stats.mean)
        meta["bbox_std"] = list(bundle.bbox_stats.std)
    return meta


@dataclass
class _PredictorRun:
    kind: PredictorKind
    outcome: TrainOutcome
    metrics: Metrics
    infer_ms: float


def _run_one(
    kind: PredictorKind,
    cfg: ExperimentConfig,
    bundle: FeatureBundle,
    events: Optional[Path],
    run_id: str,
    progress: bool,
) -> _PredictorRun:
    data = bundle.splits[kind]
    tcfg = _train_config(cfg, kind)
    _event(events, run_id, "train", "start", kind.value, epochs=tcfg.total_epochs)
    try:
        outcome = train_predictor(kind, data["train"], data["val"], tcfg, bundle.num_beams, cfg.arch, progress)
    except Exception as exc:
        _event(events, run_id, "train", "error", kind.value, error=str(exc))
        raise StageError("train", str(exc), kind.value) from exc
    _event(events, run_id, "train", "ok", kind.value, best_epoch=outcome.best_epoch, train_s=round(outcome.train_s, 3))

    try:
        metrics = evaluate(outcome.model, data["test"])
        infer_ms = time_inference(outcome.model, data["test"].x)
    except Exception as exc:
        _event(events, run_id, "evaluate", "error", kind.value, error=str(exc))
        raise StageError("evaluate", str(exc), kind.value) from exc
    _event(events, run_id, "evaluate", "ok", kind.value, top1=metrics.top1)
    outcome.model.meta.update(_checkpoint_meta(bundle, kind))
    return _PredictorRun(kind=kind, outcome=outcome, metrics=metrics, infer_ms=infer_ms)


def _event(path: Optional[Path], run_id: str, stage: str, status: str, predictor: Optional[str] = None, **detail) -> None:
    if path is not None:
        runlog.record_event(path, run_id, stage, status, predictor, **detail)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Path | str | None = None,
    threads: int | None = None,
    progress: bool = False,
) -> ExperimentReport:
    """
    Para cada preditor configurado: construir, treinar, avaliar no teste e medir
    tempos. Qualquer falha interrompe com StageError indicando o estágio.
    """
    out = Path(out_dir) if out_dir is not None else None
    events = out / runlog.EVENTS_FILE if out is not None else None
    digest = config_digest(cfg)
    run_id = f"{digest[:12]}-s{cfg.seed}"
    workers = resolve_threads(threads if threads is not None else cfg.threads)
    _event(events, run_id, "run", "start", None, dataset=cfg.dataset, seed=cfg.seed)

    try:
        manifest = prepare_manifest(cfg)
    except (DatasetIOError, SplitError) as exc:
        _event(events, run_id, "load", "error", None, error=str(exc))
        raise StageError("load", str(exc)) from exc

    kinds = list(dict.fromkeys([*cfg.predictors, PredictorKind.BBOX_MLP]))
    try:
        bundle = load_features(cfg.dataset, manifest, kinds, cfg.arch)
    except Exception as exc:
        _event(events, run_id, "features", "error", None, error=str(exc))
        raise StageError("features", str(exc)) from exc
    _event(events, run_id, "features", "ok", None, kinds=[k.value for k in kinds])

    logger.info(f"[HARNESS] experimento {run_id}: {len(cfg.predictors)} preditores, threads={workers}")
    if workers > 1 and len(cfg.predictors) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, k, cfg, bundle, events, run_id, progress) for k in cfg.predictors]
            runs = [f.result() for f in futures]
    else:
        runs = [_run_one(k, cfg, bundle, events, run_id, progress) for k in cfg.predictors]

    bbox = bundle.splits[PredictorKind.BBOX_MLP]
    try:
        oracle = knn_oracle(bbox["train"], bbox["test"], cfg.knn_k, bundle.num_beams)
    except DomainError as exc:
        raise StageError("oracle", str(exc)) from exc

    report = ExperimentReport(
        seed=cfg.seed,
        config_digest=digest,
        dataset=str(cfg.dataset),
        num_beams=bundle.num_beams,
        position_bounds=[list(b) for b in bundle.position_bounds] if bundle.position_bounds else None,
        predictors={
            r.kind.value: PredictorResult(
                top1=r.metrics.top1,
                top2=r.metrics.top2,
                top3=r.metrics.top3,
                params=param_count(r.outcome.model),
                train_s=r.outcome.train_s,
                infer_ms_per_sample=r.infer_ms,
                best_epoch=r.outcome.best_epoch,
                history=r.outcome.history,
                confusion=r.metrics.confusion.tolist(),
            )
            for r in runs
        },
        oracles={"knn_bbox_top1": oracle},
    )

    if out is not None:
        try:
            write_outputs(report, runs, manifest, cfg, out)
        except OSError as exc:
            _event(events, run_id, "report", "error", None, error=str(exc))
            raise StageError("report", f"falha ao gravar saídas em {out}: {exc}") from exc
        _event(events, run_id, "report", "ok", None, out=str(out))
    _event(events, run_id, "run", "ok", None)
    return report


def write_outputs(
    report: ExperimentReport,
    runs: Sequence[_PredictorRun],
    manifest: pd.DataFrame,
    cfg: ExperimentConfig,
    out: Path,
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    (out / "tradeoff.csv").write_text(tradeoff_csv(tradeoff_table(report)), encoding="utf-8")
    manifest.to_csv(out / "manifest.csv", index=False, float_format="%.6f", lineterminator="\n")
    dataset_meta = Path(cfg.dataset) / "dataset.json"
    if dataset_meta.exists():
        shutil.copyfile(dataset_meta, out / "dataset.json")
    for r in runs:
        save_checkpoint(r.outcome.model, out / "checkpoints" / f"{r.kind.value}.npz")
    logger.info(f"[HARNESS] relatório gravado em {out / 'report.json'}")


# chave reservada com os dados da execução; as demais chaves de report.json são preditores
REPORT_RUN_KEY = "_run"


def report_json(report: ExperimentReport) -> str:
    """{preditor: {top1, top2, top3, params, ...}, "_run": {seed, config_digest, ...}}"""
    payload: Dict = {name: r.model_dump(mode="json") for name, r in report.predictors.items()}
    payload[REPORT_RUN_KEY] = report.model_dump(mode="json", exclude={"predictors"})
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_report(path: Path | str) -> ExperimentReport:
    """Lê um report.json; ValueError (JSON ou schema) fica a cargo do chamador."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"report.json deve ser um objeto JSON: {path}")
    run = raw.pop(REPORT_RUN_KEY, {})
    if not isinstance(run, dict):
        raise ValueError(f"bloco {REPORT_RUN_KEY} inválido em {path}")
    return ExperimentReport.model_validate({**run, "predictors": raw})


# --------------------------------------------------------------------------------------
# Trade-off
# --------------------------------------------------------------------------------------

def tradeoff_table(report: ExperimentReport) -> List[TradeoffRow]:
    rows = [TradeoffRow(predictor=name, params=r.params, top1=r.top1) for name, r in report.predictors.items()]
    return sorted(rows, key=lambda row: (row.params, row.predictor))


def tradeoff_csv(rows: Sequence[TradeoffRow]) -> str:
    df = pd.DataFrame([r.model_dump() for r in rows], columns=["predictor", "params", "top1"])
    return df.to_csv(index=False, float_format="%.6f", lineterminator="\n")


def report_csv(report: ExperimentReport) -> str:
    rows = [
        {"predictor": name, "params": r.params, "top1": r.top1, "top2": r.top2, "top3": r.top3}
        for name, r in report.predictors.items()
    ]
    df = pd.DataFrame(rows, columns=["predictor", "params", "top1", "top2", "top3"])
    df = df.sort_values(["params", "predictor"], kind="stable")
    return df.to_csv(index=False, float_format="%.6f", lineterminator="\n")


def format_report_table(report: ExperimentReport) -> str:
    lines = ["predictor params top1 top2 top3"]
    for row in tradeoff_table(report):
        r = report.predictors[row.predictor]
        lines.append(f"{row.predictor} {r.params} {r.top1:.2f} {r.top2:.2f} {r.top3:.2f}")
    if report.oracles:
        for name, value in sorted(report.oracles.items()):
            lines.append(f"# oráculo {name}: {value:.2f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------------------
# Repetição por sementes
# --------------------------------------------------------------------------------------

def sweep_seeds(
    cfg: ExperimentConfig,
    seeds: Sequence[int],
    out_dir: Path | str | None = None,
    threads: int | None = None,
    progress: bool = False,
) -> Dict:
    """Roda o experimento para cada semente e agrega a média de top-1/2/3 por preditor."""
    if not seeds:
        raise DomainError("ao menos uma semente é necessária")
    out = Path(out_dir) if out_dir is not None else None
    reports: Dict[int, ExperimentReport] = {}
    for seed in seeds:
        seeded = cfg.model_copy(update={"seed": int(seed)})
        reports[int(seed)] = run_experiment(
            seeded, out / f"seed_{seed}" if out is not None else None, threads, progress
        )

    names = [k.value for k in cfg.predictors]
    mean = {
        name: {
            metric: float(np.mean([getattr(reports[s].predictors[name], metric) for s in reports]))
            for metric in ("top1", "top2", "top3")
        }
        for name in names
    }
    summary = {
        "seeds": [int(s) for s in seeds],
        "mean": mean,
        "per_seed": {str(s): {n: reports[s].predictors[n].top1 for n in names} for s in reports},
        "oracle_knn_bbox_top1": float(np.mean([r.oracles.get("knn_bbox_top1", 0.0) for r in reports.values()])),
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"[HARNESS] varredura de {len(seeds)} sementes concluída")
    return summary


# --------------------------------------------------------------------------------------
# Preditor único (verbos train / eval da CLI)
# --------------------------------------------------------------------------------------

def train_single(
    cfg: ExperimentConfig,
    kind: PredictorKind | str,
    out_dir: Path | str,
    progress: bool = False,
) -> Path:
    """Treina um preditor e grava checkpoints/<nome>.npz + <nome>_history.json."""
    kind = PredictorKind(kind)
    out = Path(out_dir)
    try:
        manifest = prepare_manifest(cfg)
        bundle = load_features(cfg.dataset, manifest, [kind], cfg.arch)
    except Exception as exc:
        raise StageError("load", str(exc), kind.value) from exc
    data = bundle.splits[kind]
    try:
        outcome = train_predictor(kind, data["train"], data["val"], _train_config(cfg, kind), bundle.num_beams, cfg.arch, progress)
    except Exception as exc:
        raise StageError("train", str(exc), kind.value) from exc
    outcome.model.meta.update(_checkpoint_meta(bundle, kind))
    path = save_checkpoint(outcome.model, out / "checkpoints" / f"{kind.value}.npz")
    history = {
        "predictor": kind.value,
        "seed": cfg.seed,
        "best_epoch": outcome.best_epoch,
        "train_s": outcome.train_s,
        "history": [h.model_dump() for h in outcome.history],
    }
    (out / f"{kind.value}_history.json").write_text(json.dumps(history, indent=2) + "\n", encoding="utf-8")
    return path


def evaluate_checkpoint(
    cfg: ExperimentConfig,
    model: Model,
    kind: PredictorKind | str | None = None,
) -> Dict:
    """Métricas do checkpoint no split de teste do dataset da config."""
    kind = PredictorKind(kind or model.meta.get("kind", ""))
    try:
        manifest = prepare_manifest(cfg)
        bundle = load_features(cfg.dataset, manifest, [kind], cfg.arch, fitted=model.meta)
    except Exception as exc:
        raise StageError("load", str(exc), kind.value) from exc
    try:
        metrics = evaluate(model, bundle.splits[kind]["test"])
    except Exception as exc:
        raise StageError("evaluate", str(exc), kind.value) from exc
    return {"predictor": kind.value, "params": param_count(model), **metrics.as_dict()}

