# beamsema/errors.py
from __future__ import annotations


class DomainError(ValueError):
    """Argumento fora do domínio matemático da operação."""


class ContractViolationError(ValueError):
    """Contrato de dimensão, forma ou rótulo violado pelo chamador."""


class ShapeContractError(ContractViolationError):
    """Forma de tensor incompatível com a camada indicada."""

    def __init__(self, message: str, layer_index: int | None = None):
        self.layer_index = layer_index
        prefix = f"[camada {layer_index}] " if layer_index is not None else ""
        super().__init__(prefix + message)


class ConfigError(ValueError):
    """Arquivo de configuração ausente, ilegível ou inválido."""
