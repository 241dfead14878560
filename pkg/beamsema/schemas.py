from __future__ import annotations

import math
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _split_csv(value):
    """Aceita '1, 2, 3' (vindo de INI) além de listas/tuplas."""
    if value is None:
        return value
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
        return [p for p in parts if p]
    return value


class PredictorKind(str, Enum):
    BBOX_MLP = "bbox_mlp"
    MASK_LENET = "mask_lenet"
    POSITION_MLP = "position_mlp"
    IMAGE_CNN_BASELINE = "image_cnn_baseline"


ALL_PREDICTORS: Tuple[PredictorKind, ...] = (
    PredictorKind.BBOX_MLP,
    PredictorKind.MASK_LENET,
    PredictorKind.POSITION_MLP,
    PredictorKind.IMAGE_CNN_BASELINE,
)


# --------------------------------------------------------------------------------------
# Canal / cena / ruído
# --------------------------------------------------------------------------------------

class ChannelConfig(BaseModel):
    """
    Parâmetros do arranjo ULA, do codebook e do canal geométrico.
    A potência P e o símbolo x ficam implícitos em snr_db (SNR = P/σ²).
    """

    model_config = ConfigDict(frozen=True)

    num_antennas: int = Field(16, ge=1, description="M, elementos do ULA.")
    num_beams: int = Field(64, ge=1, description="Q, feixes do codebook.")
    num_subcarriers: int = Field(1, ge=1, description="K, subportadoras OFDM.")
    cyclic_prefix: int = Field(0, ge=0, description="D, limite de atraso dos percursos (amostras).")
    snr_db: float = Field(0.0, description="SNR de transmissão em dB.")
    antenna_spacing: float = Field(0.5, gt=0, description="Espaçamento em comprimentos de onda.")
    num_nlos_paths: int = Field(0, ge=0)
    nlos_gain_db: float = Field(-10.0, description="Ganho NLOS relativo ao LOS (aceita -inf).")
    coverage_deg: float = Field(60.0, gt=0, lt=90, description="Cobertura angular ±θ_max do codebook.")

    @model_validator(mode="after")
    def _check_oversampled(self) -> "ChannelConfig":
        if self.num_beams < self.num_antennas:
            raise ValueError("codebook deve ser sobreamostrado (num_beams >= num_antennas)")
        return self

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


class SceneConfig(BaseModel):
    """
    Geometria da cena sintética. Coordenadas no plano do chão em metros:
    basestation/câmera na origem, eixo óptico (e broadside do ULA) ao longo de +y,
    +x à direita. Imagens são grades W×H armazenadas como arrays (H, W).
    """

    model_config = ConfigDict(frozen=True)

    image_width: int = Field(640, gt=0)
    image_height: int = Field(360, gt=0)
    channels: int = Field(1, ge=1)
    focal_length: float = Field(160.0, gt=0, description="Distância focal em pixels.")
    camera_height: float = Field(3.0, gt=0)
    road_start: Tuple[float, float] = (-16.5, 10.0)
    road_end: Tuple[float, float] = (16.5, 10.0)
    lane_offsets: Tuple[float, ...] = (0.0, 3.5)
    transmitter_dims: Tuple[float, float, float] = (4.6, 1.9, 1.6)
    vehicle_length_range: Tuple[float, float] = (3.8, 5.5)
    vehicle_width_range: Tuple[float, float] = (1.6, 2.1)
    vehicle_height_range: Tuple[float, float] = (1.4, 2.2)
    num_distractors_range: Tuple[int, int] = (0, 3)
    lighting: Literal["day", "night"] = "day"
    num_samples: int = Field(2300, ge=1)

    coerce_csv = field_validator(
        "road_start", "road_end", "lane_offsets", "transmitter_dims",
        "vehicle_length_range", "vehicle_width_range", "vehicle_height_range",
        "num_distractors_range", mode="before",
    )(_split_csv)

    @field_validator("vehicle_length_range", "vehicle_width_range", "vehicle_height_range", "num_distractors_range")
    @classmethod
    def _ordered_range(cls, value):
        lo, hi = value
        if lo > hi or lo < 0:
            raise ValueError(f"intervalo inválido: {value}")
        return value

    @field_validator("transmitter_dims")
    @classmethod
    def _positive_dims(cls, value):
        if any(v <= 0 for v in value):
            raise ValueError("dimensões do transmissor devem ser positivas")
        return value

    @model_validator(mode="after")
    def _road_in_frustum(self) -> "SceneConfig":
        half_fov = self.half_fov
        for x, y in (self.road_start, self.road_end):
            if y <= 0:
                raise ValueError(f"ponto da via ({x}, {y}) atrás da câmera")
            if abs(math.atan2(x, y)) >= half_fov:
                raise ValueError(f"ponto da via ({x}, {y}) fora do campo de visão da câmera")
        return self

    @property
    def half_fov(self) -> float:
        return math.atan2(self.image_width / 2.0, self.focal_length)


class NoiseConfig(BaseModel):
    """Modelo de ruído do detector. bbox_jitter é o deslocamento absoluto médio, em fração do tamanho da caixa."""

    model_config = ConfigDict(frozen=True)

    bbox_jitter: float = Field(0.0, ge=0)
    mask_flip_prob: float = Field(0.0, ge=0, le=1)
    mask_speckle_prob: float = Field(0.0, ge=0, le=1)
    gps_sigma: float = Field(2.0, ge=0, description="Desvio do GPS em metros.")
    miss_prob: float = Field(0.0, ge=0, le=1)

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(bbox_jitter=0.0, mask_flip_prob=0.0, mask_speckle_prob=0.0, gps_sigma=0.0, miss_prob=0.0)


# --------------------------------------------------------------------------------------
# Treino / experimento
# --------------------------------------------------------------------------------------

class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(..., ge=1)
    base_lr: float = Field(..., gt=0)
    decay_epochs: Tuple[int, ...] = ()
    decay_factor: float = Field(0.1, gt=0, le=1)
    total_epochs: int = Field(..., ge=1)
    seed: int = 0

    coerce_csv = field_validator("decay_epochs", mode="before")(_split_csv)

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        prev = 0
        for ep in self.decay_epochs:
            if ep <= prev:
                raise ValueError("decay_epochs deve ser estritamente crescente e positivo")
            if ep > self.total_epochs:
                raise ValueError(f"decay_epoch {ep} além de total_epochs={self.total_epochs}")
            prev = ep
        return self


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    train: float = Field(0.7, gt=0)
    val: float = Field(0.2, gt=0)
    test: float = Field(0.1, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _sum_to_one(self) -> "SplitSpec":
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("proporções train/val/test devem somar 1")
        return self


class ArchConfig(BaseModel):
    """Sobrescritas de arquitetura por tipo de preditor (defaults = arquitetura de referência)."""

    model_config = ConfigDict(frozen=True)

    bbox_hidden_units: int = Field(175, ge=1)
    bbox_hidden_layers: int = Field(2, ge=1)
    lenet_variant: Literal["two_dense", "lenet5"] = "two_dense"
    mask_width: int = Field(32, ge=8)
    mask_height: int = Field(32, ge=8)
    position_hidden_units: int = Field(64, ge=1)
    cnn_filters: Tuple[int, ...] = (16, 32, 64)
    cnn_dense_units: int = Field(256, ge=1)
    raster_width: int = Field(160, ge=8)
    raster_height: int = Field(90, ge=8)

    coerce_csv = field_validator("cnn_filters", mode="before")(_split_csv)


class ExperimentConfig(BaseModel):
    dataset: str
    predictors: Tuple[PredictorKind, ...] = ALL_PREDICTORS
    seed: int = 0
    threads: Optional[int] = None
    split: Optional[SplitSpec] = None
    arch: ArchConfig = Field(default_factory=ArchConfig)
    train: Dict[PredictorKind, TrainConfig] = Field(default_factory=dict)
    knn_k: int = Field(3, ge=1)

    coerce_csv = field_validator("predictors", mode="before")(_split_csv)

    @field_validator("predictors")
    @classmethod
    def _unique_predictors(cls, value):
        if not value:
            raise ValueError("ao menos um preditor é necessário")
        if len(set(value)) != len(value):
            raise ValueError("cada preditor deve aparecer uma única vez")
        return value


# --------------------------------------------------------------------------------------
# Relatórios
# --------------------------------------------------------------------------------------

class EpochRecord(BaseModel):
    epoch: int
    lr: float
    train_loss: float
    val_top1: float


class PredictorResult(BaseModel):
    top1: float = Field(..., ge=0, le=100)
    top2: float = Field(..., ge=0, le=100)
    top3: float = Field(..., ge=0, le=100)
    params: int = Field(..., ge=0)
    train_s: float = 0.0
    infer_ms_per_sample: float = 0.0
    best_epoch: int = 0
    history: List[EpochRecord] = Field(default_factory=list)
    confusion: List[List[int]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _monotone_topk(self) -> "PredictorResult":
        if not (self.top1 <= self.top2 <= self.top3):
            raise ValueError("top-k deve ser monótono: top1 <= top2 <= top3")
        return self


class ExperimentReport(BaseModel):
    seed: int = 0
    config_digest: str = ""
    dataset: str = ""
    num_beams: int = 0
    position_bounds: Optional[List[List[float]]] = None
    predictors: Dict[str, PredictorResult]
    oracles: Dict[str, float] = Field(default_factory=dict)


class TradeoffRow(BaseModel):
    predictor: str
    params: int
    top1: float


# --------------------------------------------------------------------------------------
# API
# --------------------------------------------------------------------------------------

class BBoxPredictRequest(BaseModel):
    x_c: float = Field(..., ge=0)
    y_c: float = Field(..., ge=0)
    w: float = Field(..., gt=0)
    h: float = Field(..., gt=0)
    # sem image_width/image_height, vale o tamanho gravado no checkpoint
    image_width: Optional[int] = Field(None, gt=0)
    image_height: Optional[int] = Field(None, gt=0)
    k: int = Field(3, ge=1)


class BeamPrediction(BaseModel):
    beams: List[int]
    scores: List[float]
