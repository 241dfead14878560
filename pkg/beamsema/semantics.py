# beamsema/semantics.py
"""
Conversões das saídas do detector nas representações semânticas consumidas
pelos preditores: vetor de caixa normalizado, máscara reduzida, posição
normalizada e raster reduzido (baseline de imagem).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from beamsema.errors import DomainError
from beamsema.scene_sim import PixelBBox

PositionBounds = Tuple[Tuple[float, float], Tuple[float, float]]

_MIN_POSITION_SPAN = 1e-9
_FLAT_HALF_WIDTH = 0.5          # metros
_MIN_FEATURE_STD = 1e-3


@dataclass(frozen=True)
class FeatureStats:
    mean: Tuple[float, ...]
    std: Tuple[float, ...]


def bbox_vector(b: PixelBBox, width: float, height: float) -> np.ndarray:
    """[x_c/W, y_c/H, w/W, h/H], cada entrada em [0, 1]."""
    if width <= 0 or height <= 0:
        raise DomainError(f"dimensões da imagem inválidas: {width}x{height}")
    vec = np.array([b.x_c / width, b.y_c / height, b.w / width, b.h / height], dtype=np.float64)
    return np.clip(vec, 0.0, 1.0)


def _tile_starts(size: int, cells: int) -> np.ndarray:
    # célula i cobre [floor(i·size/cells), floor((i+1)·size/cells))
    return (np.arange(cells) * size) // cells


def downsample_mask(mask: np.ndarray, width: int, height: int) -> np.ndarray:
    """
    Max-pooling em blocos sobre uma partição uniforme: a célula vale 1 se qualquer
    pixel coberto vale 1. Saída (height, width) float em {0, 1}.
    """
    if width <= 0 or height <= 0:
        raise DomainError(f"dimensões de destino inválidas: {width}x{height}")
    mask = np.asarray(mask)
    src_h, src_w = mask.shape
    if width > src_w or height > src_h:
        raise DomainError(f"destino {width}x{height} maior que a máscara {src_w}x{src_h}")
    binary = (mask != 0).astype(np.uint8)
    rows = np.maximum.reduceat(binary, _tile_starts(src_h, height), axis=0)
    cells = np.maximum.reduceat(rows, _tile_starts(src_w, width), axis=1)
    return cells.astype(np.float64)


def downsize_raster(raster: np.ndarray, width: int, height: int) -> np.ndarray:
    """Média por bloco (mesma partição da máscara); mantém a faixa [0, 1]."""
    if width <= 0 or height <= 0:
        raise DomainError(f"dimensões de destino inválidas: {width}x{height}")
    raster = np.asarray(raster, dtype=np.float64)
    src_h, src_w = raster.shape
    if width > src_w or height > src_h:
        raise DomainError(f"destino {width}x{height} maior que o raster {src_w}x{src_h}")
    r_starts = _tile_starts(src_h, height)
    c_starts = _tile_starts(src_w, width)
    sums = np.add.reduceat(np.add.reduceat(raster, r_starts, axis=0), c_starts, axis=1)
    r_sizes = np.diff(np.append(r_starts, src_h))
    c_sizes = np.diff(np.append(c_starts, src_w))
    return sums / np.outer(r_sizes, c_sizes)


def fit_position_bounds(positions: np.ndarray) -> PositionBounds:
    """
    (min, max) por dimensão, calculados só sobre o split de treino. Uma dimensão
    constante (via reta sem ruído de GPS) é alargada em ±0.5 m e passa a valer 0.5.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 2 or positions.shape[0] == 0:
        raise DomainError(f"posições devem ter shape (N, 2) com N > 0, recebido {positions.shape}")
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    flat = hi - lo < _MIN_POSITION_SPAN
    lo = np.where(flat, lo - _FLAT_HALF_WIDTH, lo)
    hi = np.where(flat, hi + _FLAT_HALF_WIDTH, hi)
    return ((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])))


def normalize_position(pos: Sequence[float] | np.ndarray, bounds: PositionBounds) -> np.ndarray:
    """Min-max com os limites do treino; valores fora dos limites são recortados para [0, 1].
    Aceita um ponto (2,) ou um lote (N, 2)."""
    lo = np.array([bounds[0][0], bounds[1][0]], dtype=np.float64)
    hi = np.array([bounds[0][1], bounds[1][1]], dtype=np.float64)
    if np.any(hi <= lo):
        raise DomainError(f"limites de posição degenerados: {bounds}")
    pos = np.asarray(pos, dtype=np.float64)
    return np.clip((pos - lo) / (hi - lo), 0.0, 1.0)


def fit_standardizer(features: np.ndarray) -> FeatureStats:
    """Média e desvio por coluna no split de treino; desvio com piso para colunas quase constantes."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise DomainError(f"features devem ter shape (N, D) com N > 0, recebido {features.shape}")
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), _MIN_FEATURE_STD)
    return FeatureStats(mean=tuple(float(v) for v in mean), std=tuple(float(v) for v in std))


def standardize(features: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """(x - média) / desvio, coluna a coluna. Aceita um vetor (D,) ou um lote (N, D)."""
    mean = np.asarray(stats.mean, dtype=np.float64)
    std = np.asarray(stats.std, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != mean.shape[0]:
        raise DomainError(f"esperado {mean.shape[0]} colunas, recebido {features.shape[-1]}")
    if np.any(std <= 0):
        raise DomainError(f"desvios inválidos: {stats.std}")
    return (features - mean) / std
