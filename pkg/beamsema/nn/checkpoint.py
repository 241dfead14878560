# beamsema/nn/checkpoint.py
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict

import numpy as np
from loguru import logger

from beamsema.nn.layers import LayerSpec, Model
from beamsema.nn.optim import ParamStore

FORMAT_VERSION = 1
_META_KEY = "__meta__"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(model: Model, path: Path | str) -> Path:
    """
    Container NPZ: cabeçalho JSON (versão, shape de entrada, camadas, passo do Adam,
    metadados livres) + tensores `param/`, `adam_m/` e `adam_v/`. Round-trip bit a bit.
    """
    path = Path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "layers": [spec.to_dict() for spec in model.layers],
        "step": model.store.step,
        "meta": model.meta,
    }
    arrays: Dict[str, np.ndarray] = {
        _META_KEY: np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8),
    }
    for name in model.store.names():
        arrays[f"param/{name}"] = model.store.params[name]
        arrays[f"adam_m/{name}"] = model.store.m[name]
        arrays[f"adam_v/{name}"] = model.store.v[name]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as fh:
            np.savez(fh, **arrays)
    except OSError as e:
        raise CheckpointError(f"falha ao gravar checkpoint em {path}: {e}") from e
    logger.debug(f"[TREINO] checkpoint salvo em {path} ({len(model.store.names())} tensores)")
    return path


def load_checkpoint(path: Path | str) -> Model:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint não encontrado: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(bytes(data[_META_KEY].tobytes()).decode("utf-8"))
            arrays = {key: data[key] for key in data.files if key != _META_KEY}
    except (OSError, ValueError, KeyError) as e:
        raise CheckpointError(f"checkpoint ilegível: {path}: {e}") from e

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"versão de checkpoint não suportada: {version} ({path})")

    layers = tuple(LayerSpec(**spec) for spec in header["layers"])
    store = ParamStore(step=int(header["step"]))
    for key, value in arrays.items():
        group, name = key.split("/", 1)
        target = {"param": store.params, "adam_m": store.m, "adam_v": store.v}.get(group)
        if target is None:
            raise CheckpointError(f"tensor inesperado no checkpoint: {key}")
        target[name] = value
    if set(store.params) != set(store.m) or set(store.params) != set(store.v):
        raise CheckpointError(f"momentos do Adam incompletos em {path}")
    return Model(
        input_shape=tuple(header["input_shape"]),
        layers=layers,
        store=store,
        meta=header.get("meta") or {},
    )
