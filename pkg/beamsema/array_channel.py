# beamsema/array_channel.py
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from beamsema.errors import ContractViolationError, DomainError
from beamsema.schemas import ChannelConfig


@dataclass(frozen=True)
class Codebook:
    """
    Q feixes f_q (linhas de `beams`, shape (Q, M)), ordenados por azimute crescente.
    Cada feixe é o vetor de steering conjugado e normalizado no azimute `azimuths[q]`.
    """

    beams: np.ndarray
    azimuths: np.ndarray

    def __len__(self) -> int:
        return int(self.beams.shape[0])


# --------------------------------------------------------------------------------------
# Geometria do ULA
# --------------------------------------------------------------------------------------

def steering_vector(azimuth: float, num_antennas: int, spacing: float = 0.5) -> np.ndarray:
    """a(θ)_m = exp(i·2π·spacing·m·sin θ), m = 0..M-1."""
    if int(num_antennas) != num_antennas or num_antennas < 1:
        raise DomainError(f"número de antenas inválido: {num_antennas}")
    if not (-math.pi / 2 < azimuth < math.pi / 2):
        raise DomainError(f"azimute {azimuth} fora de (-π/2, π/2)")
    m = np.arange(int(num_antennas), dtype=np.float64)
    return np.exp(1j * 2.0 * math.pi * spacing * m * math.sin(azimuth))


def build_codebook(cfg: ChannelConfig) -> Codebook:
    """
    Codebook sobreamostrado: grade uniforme em sin θ sobre [-sin θ_max, +sin θ_max].
    Feixes conjugados, para que o produto hᵀf atinja o pico no azimute do feixe.
    """
    q = cfg.num_beams
    s_max = math.sin(math.radians(cfg.coverage_deg))
    grid = np.array([0.0]) if q == 1 else np.linspace(-s_max, s_max, q)
    azimuths = np.arcsin(grid)
    m = np.arange(cfg.num_antennas, dtype=np.float64)
    phases = 2.0 * math.pi * cfg.antenna_spacing * np.outer(grid, m)
    beams = np.exp(-1j * phases) / math.sqrt(cfg.num_antennas)
    return Codebook(beams=beams, azimuths=azimuths)


def beam_azimuths(cb: Codebook) -> np.ndarray:
    return cb.azimuths.copy()


def codebook_pattern(cb: Codebook, azimuths: np.ndarray, spacing: float = 0.5) -> np.ndarray:
    """|a(θ)ᵀ f_q| para cada azimute (linhas) e feixe (colunas)."""
    azimuths = np.asarray(azimuths, dtype=np.float64)
    m = np.arange(cb.beams.shape[1], dtype=np.float64)
    a = np.exp(1j * 2.0 * math.pi * spacing * np.outer(np.sin(azimuths), m))
    return np.abs(a @ cb.beams.T)


# --------------------------------------------------------------------------------------
# Canal
# --------------------------------------------------------------------------------------

def synth_channel(user_azimuth: float, user_range: float, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Canal geométrico h (K × M): percurso LOS no azimute do usuário com amplitude 1/range,
    mais `num_nlos_paths` percursos de azimute aleatório atenuados por nlos_gain_db.
    Com K > 1 cada percurso aplica fase por subportadora a partir do seu atraso (< D).
    """
    if not (user_range > 0):
        raise DomainError(f"distância do usuário deve ser positiva: {user_range}")
    m_ant = cfg.num_antennas
    k_sub = cfg.num_subcarriers
    k_idx = np.arange(k_sub, dtype=np.float64)
    wideband = k_sub > 1 and cfg.cyclic_prefix > 0

    los_gain = 1.0 / user_range
    los = los_gain * steering_vector(user_azimuth, m_ant, cfg.antenna_spacing)
    h = np.tile(los.astype(np.complex128), (k_sub, 1))

    if cfg.num_nlos_paths == 0:
        return h

    nlos_amp = los_gain * 10.0 ** (cfg.nlos_gain_db / 20.0)
    theta_max = math.radians(cfg.coverage_deg)
    for _ in range(cfg.num_nlos_paths):
        azimuth = rng.uniform(-theta_max, theta_max)
        alpha = (rng.normal() + 1j * rng.normal()) / math.sqrt(2.0)
        delay = rng.uniform(0.0, cfg.cyclic_prefix) if wideband else 0.0
        if nlos_amp == 0.0:
            continue
        a = steering_vector(azimuth, m_ant, cfg.antenna_spacing)
        phase = np.exp(-1j * 2.0 * math.pi * k_idx * delay / k_sub)
        h += nlos_amp * alpha * np.outer(phase, a)
    return h


def _check_dims(h: np.ndarray, m_ant: int, cfg: ChannelConfig) -> None:
    if h.ndim != 2 or h.shape != (cfg.num_subcarriers, m_ant):
        raise ContractViolationError(
            f"canal com shape {h.shape}, esperado ({cfg.num_subcarriers}, {m_ant})"
        )


def receive_snr(h: np.ndarray, f: np.ndarray, cfg: ChannelConfig) -> float:
    """(1/K)·Σ_k SNR·|h_kᵀ f|²."""
    h = np.asarray(h)
    f = np.asarray(f)
    if f.ndim != 1:
        raise ContractViolationError(f"feixe deve ser vetor, recebido shape {f.shape}")
    _check_dims(h, f.shape[0], cfg)
    return float(cfg.snr_linear * np.mean(np.abs(h @ f) ** 2))


def beam_snr_profile(h: np.ndarray, cb: Codebook, cfg: ChannelConfig) -> np.ndarray:
    """receive_snr de todos os feixes de uma vez (vetor de tamanho Q)."""
    h = np.asarray(h)
    _check_dims(h, cb.beams.shape[1], cfg)
    return cfg.snr_linear * np.mean(np.abs(h @ cb.beams.T) ** 2, axis=0)


def optimal_beam(h: np.ndarray, cb: Codebook, cfg: ChannelConfig) -> int:
    """argmax_q da SNR média de recepção; empate resolve para o menor índice."""
    if len(cb) == 0:
        raise ContractViolationError("codebook vazio")
    return int(np.argmax(beam_snr_profile(h, cb, cfg)))
