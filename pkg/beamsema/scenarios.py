# beamsema/scenarios.py
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

from beamsema.errors import ConfigError
from beamsema.predictors import default_train_config
from beamsema.schemas import (
    ChannelConfig,
    ExperimentConfig,
    NoiseConfig,
    PredictorKind,
    SceneConfig,
    SplitSpec,
    TrainConfig,
)

PRESETS_DIR = Path(__file__).resolve().parent / "presets"
DEFAULT_EXPERIMENT = PRESETS_DIR / "experiment.ini"


class PresetError(ConfigError):
    pass


# Perfis de detector: pacotes de ruído que substituem os dois extratores semânticos
# comparados (detector grande e detector de classe mobile).
DETECTOR_PROFILES: Dict[str, Dict[str, float]] = {
    "large": {"bbox_jitter": 0.02, "mask_flip_prob": 0.05, "mask_speckle_prob": 5e-5, "miss_prob": 0.01},
    "mobile": {"bbox_jitter": 0.03, "mask_flip_prob": 0.15, "mask_speckle_prob": 2e-4, "miss_prob": 0.03},
}


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    scene: SceneConfig
    channel: ChannelConfig
    noise: NoiseConfig
    split: SplitSpec


def list_presets() -> List[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob("scenario*.ini"))


def _read_ini(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with path.open("r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"arquivo de configuração não encontrado: {path}") from e
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"arquivo de configuração ilegível: {path}: {e}") from e
    return parser


def _section(parser: configparser.ConfigParser, name: str) -> Dict[str, str]:
    return dict(parser.items(name)) if parser.has_section(name) else {}


def noise_from_section(values: Dict[str, str]) -> NoiseConfig:
    """Perfil do detector (se houver) + chaves explícitas, que têm precedência."""
    values = dict(values)
    profile = values.pop("detector", "").strip()
    merged: Dict[str, object] = {}
    if profile:
        if profile not in DETECTOR_PROFILES:
            raise PresetError(
                f"perfil de detector desconhecido: {profile!r} (disponíveis: {', '.join(sorted(DETECTOR_PROFILES))})"
            )
        merged.update(DETECTOR_PROFILES[profile])
    merged.update(values)
    return NoiseConfig(**merged)


def load_preset(name: str, noiseless: bool = False, detector: Optional[str] = None) -> ScenarioPreset:
    """
    Carrega `presets/<name>.ini` (aceita o sufixo "-like").
    detector troca o perfil de ruído do preset (chaves explícitas de [noise] continuam valendo).
    noiseless=True zera o NoiseConfig e remove os percursos NLOS do canal.
    """
    key = name[:-5] if name.endswith("-like") else name
    available = list_presets()
    if key not in available:
        raise PresetError(f"preset desconhecido: {name!r} (disponíveis: {', '.join(available)})")

    path = PRESETS_DIR / f"{key}.ini"
    parser = _read_ini(path)
    try:
        scene = SceneConfig(**_section(parser, "scene"))
        channel = ChannelConfig(**_section(parser, "channel"))
        noise_values = _section(parser, "noise")
        if detector is not None:
            noise_values["detector"] = detector
        noise = noise_from_section(noise_values)
        split = SplitSpec(**_section(parser, "split"))
    except ValidationError as e:
        raise PresetError(f"preset {key} inválido: {e}") from e

    if noiseless:
        noise = NoiseConfig.zero()
        channel = channel.model_copy(update={"num_nlos_paths": 0})
    logger.debug(f"[CENA] preset {key} carregado (detector={detector or 'preset'}, noiseless={noiseless})")
    return ScenarioPreset(name=key, scene=scene, channel=channel, noise=noise, split=split)


def load_experiment_config(path: Path | str | None = None, seed_override: Optional[int] = None) -> ExperimentConfig:
    """
    Lê o INI de experimento ([experiment], [arch], [split], [train.<preditor>]).
    Preditores sem seção [train.*] usam o default da tabela de hiperparâmetros.
    """
    path = Path(path) if path is not None else DEFAULT_EXPERIMENT
    parser = _read_ini(path)
    if not parser.has_section("experiment"):
        raise ConfigError(f"seção [experiment] ausente em {path}")

    payload: Dict[str, object] = _section(parser, "experiment")
    if parser.has_section("arch"):
        payload["arch"] = _section(parser, "arch")
    if parser.has_section("split"):
        payload["split"] = _section(parser, "split")

    train: Dict[str, Dict[str, str]] = {}
    for section in parser.sections():
        if not section.startswith("train."):
            continue
        kind = section.split(".", 1)[1]
        if kind not in {k.value for k in PredictorKind}:
            raise ConfigError(f"seção [{section}] não corresponde a nenhum preditor conhecido")
        train[kind] = _section(parser, section)
    payload["train"] = train
    if seed_override is not None:
        payload["seed"] = seed_override

    try:
        cfg = ExperimentConfig(**payload)
    except ValidationError as e:
        raise ConfigError(f"configuração de experimento inválida em {path}: {e}") from e
    logger.debug(f"[CLI] experimento carregado de {path}: {[p.value for p in cfg.predictors]}")
    return cfg


def train_config_for(cfg: ExperimentConfig, kind: PredictorKind) -> TrainConfig:
    base = cfg.train.get(kind) or default_train_config(kind)
    return base.model_copy(update={"seed": cfg.seed})
