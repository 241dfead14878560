# beamsema/runlog.py
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from loguru import logger

EVENTS_FILE = "events.jsonl"   # append-only (um evento por linha)


# === Modelo de dados ===
@dataclass
class RunEvent:
    ts: str                    # ISO UTC
    run_id: str                # identifica a execução (digest da config + seed)
    stage: str                 # ex.: "load", "features", "train", "evaluate", "report"
    predictor: Optional[str]   # None para eventos do experimento inteiro
    status: str                # "start" | "ok" | "error"
    detail: Dict[str, Any]

    @staticmethod
    def now_utc() -> str:
        return datetime.now(timezone.utc).isoformat()


_LOCK = threading.Lock()


def _append(path: Path, ev: RunEvent) -> None:
    line = json.dumps(asdict(ev), ensure_ascii=False, sort_keys=True)
    with _LOCK:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as f:
            f.write(line + "\n")


def record_event(
    path: Path | str,
    run_id: str,
    stage: str,
    status: str,
    predictor: Optional[str] = None,
    **detail: Any,
) -> None:
    """
    Registra um evento de estágio. Melhor esforço: falha de escrita só gera warning.
    """
    ev = RunEvent(
        ts=RunEvent.now_utc(),
        run_id=run_id,
        stage=stage,
        predictor=predictor,
        status=status,
        detail=detail,
    )
    try:
        _append(Path(path), ev)
    except OSError as e:
        logger.warning(f"[RUNLOG] falha ao registrar evento {stage}/{status} em {path}: {e}")
        return
    logger.debug(f"[RUNLOG] {stage}/{status} predictor={predictor} {detail}")


def iter_events(path: Path | str) -> Iterable[RunEvent]:
    path = Path(path)
    if not path.exists():
        return []
    return _read(path)


def _read(path: Path) -> Iterable[RunEvent]:
    with _LOCK:
        lines = path.read_text(encoding="utf-8").splitlines()
    for ln in lines:
        ln = ln.strip()
        if not ln:
            continue
        try:
            d = json.loads(ln)
            yield RunEvent(
                ts=d.get("ts", ""),
                run_id=d.get("run_id", ""),
                stage=d.get("stage", ""),
                predictor=d.get("predictor"),
                status=d.get("status", ""),
                detail=d.get("detail") or {},
            )
        except (ValueError, AttributeError):
            continue


def summarize(path: Path | str) -> Dict[str, Any]:
    """
    Contagem por estágio e status, execuções vistas e os últimos erros.
    """
    events: List[RunEvent] = list(iter_events(path))
    by_stage: Dict[str, Dict[str, int]] = {}
    runs: List[str] = []
    errors: List[Dict[str, Any]] = []
    for ev in events:
        counts = by_stage.setdefault(ev.stage, {})
        counts[ev.status] = counts.get(ev.status, 0) + 1
        if ev.run_id and ev.run_id not in runs:
            runs.append(ev.run_id)
        if ev.status == "error":
            errors.append({"ts": ev.ts, "stage": ev.stage, "predictor": ev.predictor, **ev.detail})
    return {
        "events_count": len(events),
        "runs": runs,
        "by_stage": by_stage,
        "recent_errors": errors[-10:],
    }
