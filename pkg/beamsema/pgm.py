# beamsema/pgm.py
from __future__ import annotations

from pathlib import Path

import numpy as np


class DatasetIOError(OSError):
    """Falha de leitura/escrita de artefatos do dataset (sempre com o caminho do arquivo)."""


def to_gray8(grid: np.ndarray) -> np.ndarray:
    """Grade em [0,1] -> uint8 (máscaras binárias viram {0,255})."""
    arr = np.asarray(grid)
    if arr.dtype == np.bool_:
        return np.where(arr, 255, 0).astype(np.uint8)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: Path | str, grid: np.ndarray) -> None:
    """Grava PGM binário (P5, 8 bits). `grid` tem shape (H, W)."""
    path = Path(path)
    data = to_gray8(grid)
    if data.ndim != 2:
        raise DatasetIOError(f"[PGM] grade deve ser 2-D para {path}, recebido shape {data.shape}")
    h, w = data.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(data).tobytes())
    except OSError as e:
        raise DatasetIOError(f"[PGM] falha ao gravar {path}: {e}") from e


def _header_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            break
        tokens.append(raw[start:pos])
    # exatamente um caractere de espaço separa o cabeçalho dos dados
    return tokens, pos + 1


def read_pgm(path: Path | str) -> np.ndarray:
    """Lê PGM P5 8 bits e devolve uint8 com shape (H, W)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"[PGM] falha ao ler {path}: {e}") from e
    tokens, offset = _header_tokens(raw, 4)
    if len(tokens) != 4 or tokens[0] != b"P5":
        raise DatasetIOError(f"[PGM] cabeçalho inválido em {path}")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise DatasetIOError(f"[PGM] cabeçalho inválido em {path}: {e}") from e
    if maxval != 255:
        raise DatasetIOError(f"[PGM] apenas 8 bits suportado ({path}, maxval={maxval})")
    body = raw[offset:offset + w * h]
    if len(body) != w * h:
        raise DatasetIOError(f"[PGM] arquivo truncado: {path}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
