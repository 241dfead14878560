# beamsema/predictors.py
from __future__ import annotations

from typing import Dict, List, Tuple

from loguru import logger

from beamsema.errors import ContractViolationError, DomainError
from beamsema.nn.layers import (
    LayerSpec,
    Model,
    build_model,
    conv2d,
    dense,
    flatten,
    infer_shapes,
    layer_param_count,
    maxpool2d,
    param_count,
    relu,
)
from beamsema.schemas import ArchConfig, PredictorKind, TrainConfig

BBOX_INPUT: Tuple[int, ...] = (4,)
POSITION_INPUT: Tuple[int, ...] = (2,)

# Coluna "máscara" e coluna "caixa" da tabela de hiperparâmetros; os baselines
# herdam a coluna do preditor com entrada de mesma natureza.
_MASK_COLUMN = dict(batch_size=64, base_lr=1e-3, decay_epochs=(10, 20), decay_factor=0.1, total_epochs=30)
_BBOX_COLUMN = dict(batch_size=128, base_lr=1e-2, decay_epochs=(15, 30), decay_factor=0.1, total_epochs=50)

_DEFAULT_TRAIN: Dict[PredictorKind, Dict] = {
    PredictorKind.BBOX_MLP: _BBOX_COLUMN,
    PredictorKind.MASK_LENET: _MASK_COLUMN,
    PredictorKind.POSITION_MLP: _BBOX_COLUMN,
    PredictorKind.IMAGE_CNN_BASELINE: _MASK_COLUMN,
}


def default_train_config(kind: PredictorKind) -> TrainConfig:
    return TrainConfig(**_DEFAULT_TRAIN[PredictorKind(kind)])


def _check_classes(num_beams: int) -> None:
    if num_beams < 2:
        raise DomainError(f"são necessárias ao menos 2 classes, recebido Q={num_beams}")


def _tag(model: Model, kind: PredictorKind, num_beams: int) -> Model:
    model.meta.update({"kind": kind.value, "num_beams": int(num_beams)})
    return model


def build_bbox_mlp(num_beams: int, hidden_units: int = 175, hidden_layers: int = 2, seed: int = 0) -> Model:
    """FCNN sobre o vetor de caixa: `hidden_layers` camadas ocultas de `hidden_units` + cabeça Q."""
    _check_classes(num_beams)
    layers: List[LayerSpec] = []
    for _ in range(hidden_layers):
        layers += [dense(hidden_units), relu()]
    layers.append(dense(num_beams))
    return _tag(build_model(BBOX_INPUT, layers, seed), PredictorKind.BBOX_MLP, num_beams)


def build_mask_lenet(
    num_beams: int,
    mask_width: int = 32,
    mask_height: int = 32,
    variant: str = "two_dense",
    seed: int = 0,
) -> Model:
    """
    Pilha conv/pool do LeNet-5 sobre a máscara reduzida.
    `two_dense`: flatten -> 120 -> Q. `lenet5`: flatten -> 120 -> 84 -> Q.
    """
    _check_classes(num_beams)
    if variant not in ("two_dense", "lenet5"):
        raise DomainError(f"variante de LeNet desconhecida: {variant}")
    layers: List[LayerSpec] = [
        conv2d(6, 5), relu(), maxpool2d(2),
        conv2d(16, 5), relu(), maxpool2d(2),
        flatten(),
        dense(120), relu(),
    ]
    if variant == "lenet5":
        layers += [dense(84), relu()]
    layers.append(dense(num_beams))
    model = build_model((1, mask_height, mask_width), layers, seed)
    model.meta["variant"] = variant
    return _tag(model, PredictorKind.MASK_LENET, num_beams)


def build_position_mlp(num_beams: int, hidden_units: int = 64, seed: int = 0) -> Model:
    _check_classes(num_beams)
    layers = [dense(hidden_units), relu(), dense(num_beams)]
    return _tag(build_model(POSITION_INPUT, layers, seed), PredictorKind.POSITION_MLP, num_beams)


def build_image_cnn_baseline(
    num_beams: int,
    raster_width: int = 160,
    raster_height: int = 90,
    filters: Tuple[int, ...] = (16, 32, 64),
    dense_units: int = 256,
    seed: int = 0,
) -> Model:
    """
    CNN sobre o raster reduzido: blocos conv 3×3 (same) + ReLU + pool 2, depois
    dense(dense_units) e cabeça Q. Precisa ter mais de 6× os parâmetros do bbox_mlp.
    """
    _check_classes(num_beams)
    layers: List[LayerSpec] = []
    for f in filters:
        layers += [conv2d(f, 3, padding="same"), relu(), maxpool2d(2)]
    layers += [flatten(), dense(dense_units), relu(), dense(num_beams)]

    shapes = infer_shapes((1, raster_height, raster_width), layers)
    count = sum(layer_param_count(spec, shapes[i]) for i, spec in enumerate(layers))
    reference = 6 * _bbox_reference_count(num_beams)
    if count <= reference:
        raise ContractViolationError(
            f"baseline de imagem com {count} parâmetros; exige-se mais de {reference} (6× bbox_mlp)"
        )
    model = build_model((1, raster_height, raster_width), layers, seed)
    return _tag(model, PredictorKind.IMAGE_CNN_BASELINE, num_beams)


def _bbox_reference_count(num_beams: int, hidden: int = 175) -> int:
    return (4 * hidden + hidden) + (hidden * hidden + hidden) + (hidden * num_beams + num_beams)


def build_predictor(kind: PredictorKind | str, num_beams: int, arch: ArchConfig | None = None, seed: int = 0) -> Model:
    kind = PredictorKind(kind)
    arch = arch or ArchConfig()
    if kind is PredictorKind.BBOX_MLP:
        model = build_bbox_mlp(num_beams, arch.bbox_hidden_units, arch.bbox_hidden_layers, seed)
    elif kind is PredictorKind.MASK_LENET:
        model = build_mask_lenet(num_beams, arch.mask_width, arch.mask_height, arch.lenet_variant, seed)
    elif kind is PredictorKind.POSITION_MLP:
        model = build_position_mlp(num_beams, arch.position_hidden_units, seed)
    else:
        model = build_image_cnn_baseline(
            num_beams, arch.raster_width, arch.raster_height, tuple(arch.cnn_filters), arch.cnn_dense_units, seed
        )
    logger.debug(f"[TREINO] preditor {kind.value} construído: {param_count(model)} parâmetros")
    return model


def closed_form_param_count(model: Model) -> int:
    """Soma das contagens fechadas por camada (confere com param_count)."""
    shapes = infer_shapes(model.input_shape, model.layers)
    return sum(layer_param_count(spec, shapes[i]) for i, spec in enumerate(model.layers))


__all__ = [
    "build_bbox_mlp",
    "build_mask_lenet",
    "build_position_mlp",
    "build_image_cnn_baseline",
    "build_predictor",
    "closed_form_param_count",
    "default_train_config",
    "param_count",
]
