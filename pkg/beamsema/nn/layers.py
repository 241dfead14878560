# beamsema/nn/layers.py
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Literal, Sequence, Tuple

import numpy as np

from beamsema.errors import ContractViolationError, ShapeContractError
from beamsema.nn.optim import ParamStore, Tensors

LayerKind = Literal["dense", "conv2d", "relu", "maxpool2d", "flatten"]
Shape = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    """
    Uma camada da pilha. Campos usados por tipo:
      dense: units | conv2d: filters, kernel, padding ("valid" | "same") | maxpool2d: pool
    Entradas em layout NCHW (sem a dimensão de batch nos shapes declarados).
    """

    kind: LayerKind
    units: int = 0
    filters: int = 0
    kernel: int = 0
    padding: Literal["valid", "same"] = "valid"
    pool: int = 2

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", units=units)


def conv2d(filters: int, kernel: int, padding: str = "valid") -> LayerSpec:
    return LayerSpec("conv2d", filters=filters, kernel=kernel, padding=padding)  # type: ignore[arg-type]


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool2d(pool: int = 2) -> LayerSpec:
    return LayerSpec("maxpool2d", pool=pool)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


@dataclass
class Model:
    input_shape: Shape
    layers: Tuple[LayerSpec, ...]
    store: ParamStore
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def output_shape(self) -> Shape:
        return infer_shapes(self.input_shape, self.layers)[-1]


# --------------------------------------------------------------------------------------
# Inferência de shapes e contagem de parâmetros
# --------------------------------------------------------------------------------------

def _pad_amount(spec: LayerSpec) -> int:
    return (spec.kernel - 1) // 2 if spec.padding == "same" else 0


def layer_output_shape(spec: LayerSpec, in_shape: Shape, index: int = 0) -> Shape:
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise ShapeContractError(f"dense espera entrada 1-D, recebeu {in_shape}", index)
        return (spec.units,)
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise ShapeContractError(f"conv2d espera entrada (C, H, W), recebeu {in_shape}", index)
        _, h, w = in_shape
        pad = _pad_amount(spec)
        ho, wo = h + 2 * pad - spec.kernel + 1, w + 2 * pad - spec.kernel + 1
        if ho < 1 or wo < 1:
            raise ShapeContractError(f"kernel {spec.kernel} maior que a entrada {in_shape}", index)
        return (spec.filters, ho, wo)
    if spec.kind == "maxpool2d":
        if len(in_shape) != 3:
            raise ShapeContractError(f"maxpool2d espera entrada (C, H, W), recebeu {in_shape}", index)
        c, h, w = in_shape
        if h < spec.pool or w < spec.pool:
            raise ShapeContractError(f"pool {spec.pool} maior que a entrada {in_shape}", index)
        return (c, h // spec.pool, w // spec.pool)
    if spec.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if spec.kind == "relu":
        return in_shape
    raise ShapeContractError(f"tipo de camada desconhecido: {spec.kind}", index)


def infer_shapes(input_shape: Shape, layers: Sequence[LayerSpec]) -> List[Shape]:
    """Shapes de entrada seguidos da saída de cada camada; valida a composição."""
    shapes: List[Shape] = [tuple(input_shape)]
    for i, spec in enumerate(layers):
        shapes.append(layer_output_shape(spec, shapes[-1], i))
    return shapes


def layer_param_count(spec: LayerSpec, in_shape: Shape) -> int:
    """Contagem fechada por camada (pesos + vieses)."""
    if spec.kind == "dense":
        return in_shape[0] * spec.units + spec.units
    if spec.kind == "conv2d":
        return in_shape[0] * spec.filters * spec.kernel * spec.kernel + spec.filters
    return 0


# --------------------------------------------------------------------------------------
# Construção
# --------------------------------------------------------------------------------------

def build_model(input_shape: Sequence[int], layers: Sequence[LayerSpec], seed: int = 0) -> Model:
    """Inicialização uniforme ±√(1/fan_in) para pesos e vieses, na ordem das camadas."""
    input_shape = tuple(int(d) for d in input_shape)
    layers = tuple(layers)
    shapes = infer_shapes(input_shape, layers)
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for i, spec in enumerate(layers):
        in_shape = shapes[i]
        if spec.kind == "dense":
            fan_in = in_shape[0]
            w_shape: Shape = (fan_in, spec.units)
            b_shape: Shape = (spec.units,)
        elif spec.kind == "conv2d":
            fan_in = in_shape[0] * spec.kernel * spec.kernel
            w_shape = (spec.filters, in_shape[0], spec.kernel, spec.kernel)
            b_shape = (spec.filters,)
        else:
            continue
        bound = math.sqrt(1.0 / fan_in)
        store.add(f"{i}.weight", rng.uniform(-bound, bound, size=w_shape))
        store.add(f"{i}.bias", rng.uniform(-bound, bound, size=b_shape))
    return Model(input_shape=input_shape, layers=layers, store=store)


def param_count(model: Model) -> int:
    return model.store.size()


# --------------------------------------------------------------------------------------
# Passo direto / reverso por tipo de camada
# --------------------------------------------------------------------------------------

def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int) -> Tuple[np.ndarray, np.ndarray]:
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    f, _, kh, kw = w.shape
    n, _, hp, wp = xp.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    out = np.zeros((n, f, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + ho, j:j + wo]
            out += np.einsum("nchw,fc->nfhw", patch, w[:, :, i, j], optimize=True)
    out += b[None, :, None, None]
    return out, xp


def _conv_backward(dout: np.ndarray, xp: np.ndarray, w: np.ndarray, pad: int):
    f, _, kh, kw = w.shape
    _, _, ho, wo = dout.shape
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + ho, j:j + wo]
            dw[:, :, i, j] = np.einsum("nfhw,nchw->fc", dout, patch, optimize=True)
            dxp[:, :, i:i + ho, j:j + wo] += np.einsum("nfhw,fc->nchw", dout, w[:, :, i, j], optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    dx = dxp[:, :, pad:-pad, pad:-pad] if pad else dxp
    return dx, dw, db


def _pool_forward(x: np.ndarray, p: int) -> Tuple[np.ndarray, Tuple[np.ndarray, Shape]]:
    n, c, h, w = x.shape
    ho, wo = h // p, w // p
    blocks = x[:, :, :ho * p, :wo * p].reshape(n, c, ho, p, wo, p).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, ho, wo, p * p)
    arg = blocks.argmax(axis=-1)  # primeiro máximo recebe o gradiente
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def _pool_backward(dout: np.ndarray, cache: Tuple[np.ndarray, Shape], p: int) -> np.ndarray:
    arg, in_shape = cache
    n, c, h, w = in_shape
    ho, wo = dout.shape[2], dout.shape[3]
    onehot = np.zeros((n, c, ho, wo, p * p), dtype=np.float64)
    np.put_along_axis(onehot, arg[..., None], dout[..., None], axis=-1)
    blocks = onehot.reshape(n, c, ho, wo, p, p).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * p, wo * p)
    dx = np.zeros(in_shape, dtype=np.float64)
    dx[:, :, :ho * p, :wo * p] = blocks
    return dx


def _forward_cached(model: Model, x: np.ndarray) -> Tuple[np.ndarray, List[Any]]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != len(model.input_shape) + 1 or tuple(x.shape[1:]) != model.input_shape:
        raise ShapeContractError(
            f"entrada com shape {tuple(x.shape[1:])}, esperado {model.input_shape}", 0
        )
    params = model.store.params
    caches: List[Any] = []
    for i, spec in enumerate(model.layers):
        if spec.kind == "dense":
            caches.append(x)
            x = x @ params[f"{i}.weight"] + params[f"{i}.bias"]
        elif spec.kind == "conv2d":
            x, xp = _conv_forward(x, params[f"{i}.weight"], params[f"{i}.bias"], _pad_amount(spec))
            caches.append(xp)
        elif spec.kind == "relu":
            caches.append(x > 0)
            x = np.maximum(x, 0.0)
        elif spec.kind == "maxpool2d":
            x, cache = _pool_forward(x, spec.pool)
            caches.append(cache)
        elif spec.kind == "flatten":
            caches.append(x.shape)
            x = x.reshape(x.shape[0], -1)
    return x, caches


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Logits (N, Q) para um lote N de entradas no shape declarado."""
    out, _ = _forward_cached(model, x)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels: np.ndarray, num_classes: int, batch: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ContractViolationError(f"rótulos com shape {labels.shape}, esperado ({batch},)")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractViolationError(f"rótulo fora de [0, {num_classes})")
    return labels.astype(np.int64)


def loss_and_grad(model: Model, x: np.ndarray, labels: np.ndarray) -> Tuple[float, Tensors]:
    """Entropia cruzada média com softmax e gradientes analíticos de todos os parâmetros."""
    logits, caches = _forward_cached(model, x)
    n, q = logits.shape
    labels = _check_labels(labels, q, n)

    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - shifted[rows, labels]))

    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    grad /= n

    params = model.store.params
    grads: Tensors = {}
    for i in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[i]
        cache = caches[i]
        if spec.kind == "dense":
            grads[f"{i}.weight"] = cache.T @ grad
            grads[f"{i}.bias"] = grad.sum(axis=0)
            grad = grad @ params[f"{i}.weight"].T
        elif spec.kind == "conv2d":
            grad, dw, db = _conv_backward(grad, cache, params[f"{i}.weight"], _pad_amount(spec))
            grads[f"{i}.weight"] = dw
            grads[f"{i}.bias"] = db
        elif spec.kind == "relu":
            grad = grad * cache
        elif spec.kind == "maxpool2d":
            grad = _pool_backward(grad, cache, spec.pool)
        elif spec.kind == "flatten":
            grad = grad.reshape(cache)
    return loss, grads
