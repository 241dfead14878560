# beamsema/nn/optim.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from beamsema.errors import ContractViolationError, DomainError
from beamsema.schemas import TrainConfig

Tensors = Dict[str, np.ndarray]


@dataclass
class ParamStore:
    """
    Parâmetros treináveis nomeados ("{i}.weight", "{i}.bias") com os momentos do Adam.
    `m` e `v` têm sempre o mesmo shape do parâmetro correspondente.
    """

    params: Tensors = field(default_factory=dict)
    m: Tensors = field(default_factory=dict)
    v: Tensors = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.m[name] = np.zeros_like(self.params[name])
        self.v[name] = np.zeros_like(self.params[name])

    def names(self) -> Tuple[str, ...]:
        return tuple(self.params)

    def size(self) -> int:
        return int(sum(p.size for p in self.params.values()))


def snapshot(store: ParamStore) -> ParamStore:
    """Cópia profunda (usada para guardar a melhor época)."""
    return ParamStore(
        params={k: v.copy() for k, v in store.params.items()},
        m={k: v.copy() for k, v in store.m.items()},
        v={k: v.copy() for k, v in store.v.items()},
        step=store.step,
    )


def restore(store: ParamStore, saved: ParamStore) -> ParamStore:
    for name in store.params:
        store.params[name][...] = saved.params[name]
        store.m[name][...] = saved.m[name]
        store.v[name][...] = saved.v[name]
    store.step = saved.step
    return store


def adam_step(
    store: ParamStore,
    grads: Tensors,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """Atualização Adam com correção de viés; altera `store` no lugar e o devolve."""
    if set(grads) != set(store.params):
        raise ContractViolationError(
            f"gradientes não correspondem aos parâmetros: {sorted(set(grads) ^ set(store.params))}"
        )
    for name, g in grads.items():
        if g.shape != store.params[name].shape:
            raise ContractViolationError(
                f"gradiente de {name} com shape {g.shape}, esperado {store.params[name].shape}"
            )

    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        store.params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return store


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """base_lr · decay_factor^(nº de decay_epochs <= epoch); o decaimento vale a partir da época listada."""
    if not (0 <= epoch < cfg.total_epochs):
        raise DomainError(f"época {epoch} fora de [0, {cfg.total_epochs})")
    passed = sum(1 for d in cfg.decay_epochs if d <= epoch)
    return cfg.base_lr * math.pow(cfg.decay_factor, passed)
