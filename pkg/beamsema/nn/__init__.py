# beamsema/nn/__init__.py
"""Rede treinável mínima: camadas densas e convolucionais, Adam e checkpoints."""
from beamsema.nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from beamsema.nn.layers import (
    LayerSpec,
    Model,
    build_model,
    conv2d,
    dense,
    flatten,
    forward,
    infer_shapes,
    layer_param_count,
    loss_and_grad,
    maxpool2d,
    param_count,
    relu,
    softmax,
)
from beamsema.nn.optim import ParamStore, adam_step, lr_at_epoch, restore, snapshot

__all__ = [
    "CheckpointError",
    "LayerSpec",
    "Model",
    "ParamStore",
    "adam_step",
    "build_model",
    "conv2d",
    "dense",
    "flatten",
    "forward",
    "infer_shapes",
    "layer_param_count",
    "load_checkpoint",
    "loss_and_grad",
    "lr_at_epoch",
    "maxpool2d",
    "param_count",
    "relu",
    "restore",
    "save_checkpoint",
    "snapshot",
    "softmax",
]
