"""Predição de feixes mmWave assistida por semântica do ambiente."""

__version__ = "0.1.0"
