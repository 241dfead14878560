# beamsema/cli.py
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from loguru import logger
from pydantic import ValidationError

from beamsema import harness
from beamsema.config import resolve_threads, settings
from beamsema.errors import ConfigError
from beamsema.nn.checkpoint import CheckpointError, load_checkpoint
from beamsema.pgm import DatasetIOError
from beamsema.scenarios import DETECTOR_PROFILES, PresetError, list_presets, load_experiment_config, load_preset
from beamsema.scene_sim import GenerationError, ProjectionError, audit_labels, generate_dataset
from beamsema.schemas import PredictorKind

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else settings.LOG_LEVEL)
    if settings.LOG_FILE:
        logger.add(settings.LOG_FILE, rotation="10 MB", retention=5, enqueue=True)


def _fail(code: int, message: str) -> int:
    print(f"erro: {message}", file=sys.stderr)
    return code


def _parse_seeds(raw: str) -> List[int]:
    try:
        seeds = [int(s) for s in raw.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"lista de sementes inválida: {raw!r}") from e
    if not seeds:
        raise ConfigError(f"lista de sementes vazia: {raw!r}")
    return seeds


# --------------------------------------------------------------------------------------
# Verbos
# --------------------------------------------------------------------------------------

def cmd_gen(args: argparse.Namespace) -> int:
    try:
        preset = load_preset(args.preset, noiseless=args.noiseless, detector=args.detector)
    except PresetError as e:
        return _fail(EXIT_USAGE, str(e))
    out = args.out or str(Path(settings.DATA_DIR) / preset.name)
    threads = resolve_threads(args.threads)
    split = preset.split.model_copy(update={"seed": args.seed})
    try:
        manifest = generate_dataset(
            preset.scene,
            preset.channel,
            preset.noise,
            args.seed,
            out,
            scenario=preset.name,
            split=split,
            threads=threads,
            progress=args.verbose,
            extra_meta={"preset": preset.name, "noiseless": bool(args.noiseless), "detector": args.detector},
        )
    except DatasetIOError as e:
        return _fail(EXIT_USAGE, str(e))
    except (GenerationError, ProjectionError) as e:
        return _fail(EXIT_RUNTIME, f"estágio gen: {e}")
    if args.audit:
        try:
            mismatches = audit_labels(out)
        except DatasetIOError as e:
            return _fail(EXIT_RUNTIME, f"estágio audit: {e}")
        if mismatches:
            return _fail(EXIT_RUNTIME, f"estágio audit: {mismatches} rótulos divergentes")
    logger.info(f"[CLI] dataset {preset.name} com {len(manifest)} amostras em {out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_experiment_config(args.config, seed_override=args.seed)
        seeds = _parse_seeds(args.seeds) if args.seeds is not None else None
    except (ConfigError, ValidationError) as e:
        return _fail(EXIT_USAGE, str(e))
    try:
        if seeds:
            summary = harness.sweep_seeds(cfg, seeds, args.out, args.threads, progress=args.verbose)
            print(json.dumps(summary["mean"], indent=2, sort_keys=True))
        else:
            report = harness.run_experiment(cfg, args.out, args.threads, progress=args.verbose)
            print(harness.format_report_table(report), end="")
    except harness.StageError as e:
        return _fail(EXIT_RUNTIME, f"falha no estágio {e}")
    except Exception as e:  # qualquer outra falha de execução também é runtime
        logger.exception("[CLI] falha inesperada no run")
        return _fail(EXIT_RUNTIME, f"estágio run: {e}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    try:
        cfg = load_experiment_config(args.config, seed_override=args.seed)
        kind = PredictorKind(args.predictor)
    except (ConfigError, ValidationError, ValueError) as e:
        return _fail(EXIT_USAGE, str(e))
    try:
        path = harness.train_single(cfg, kind, args.out, progress=args.verbose)
    except harness.StageError as e:
        return _fail(EXIT_RUNTIME, f"falha no estágio {e}")
    except Exception as e:
        logger.exception("[CLI] falha inesperada no train")
        return _fail(EXIT_RUNTIME, f"estágio train: {e}")
    print(str(path))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        cfg = load_experiment_config(args.config)
        kind = PredictorKind(args.predictor) if args.predictor else None
    except (ConfigError, ValidationError, ValueError) as e:
        return _fail(EXIT_USAGE, str(e))
    try:
        model = load_checkpoint(args.checkpoint)
        if kind is None:
            kind = PredictorKind(model.meta.get("kind", ""))
    except (CheckpointError, ValueError) as e:
        return _fail(EXIT_USAGE, str(e))
    try:
        metrics = harness.evaluate_checkpoint(cfg, model, kind)
    except harness.StageError as e:
        return _fail(EXIT_RUNTIME, f"falha no estágio {e}")
    except Exception as e:
        logger.exception("[CLI] falha inesperada no eval")
        return _fail(EXIT_RUNTIME, f"estágio evaluate: {e}")
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        report = harness.load_report(args.input)
    except (OSError, ValueError) as e:
        return _fail(EXIT_USAGE, f"relatório ilegível em {args.input}: {e}")
    if args.format == "csv":
        sys.stdout.write(harness.report_csv(report))
    else:
        sys.stdout.write(harness.format_report_table(report))
    return EXIT_OK


# --------------------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamsema",
        description="Predição de feixe mmWave a partir de semântica do ambiente (dataset sintético).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="logs em nível DEBUG e barras de progresso")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="gera um dataset a partir de um preset")
    gen.add_argument("--preset", required=True, help=f"um de: {', '.join(list_presets())}")
    gen.add_argument("--out", default=None, help="default: BEAMSEMA_DATA_DIR/<preset>")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noiseless", action="store_true", help="somente LOS e NoiseConfig zerado")
    gen.add_argument("--detector", choices=sorted(DETECTOR_PROFILES), default=None, help="troca o perfil de ruído do preset")
    gen.add_argument("--threads", type=int, default=None)
    gen.add_argument("--audit", action="store_true", help="recalcula os rótulos após gerar")
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="treina e avalia os preditores da config")
    run.add_argument("--config", default=None, help="INI de experimento (default: presets/experiment.ini)")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--threads", type=int, default=None)
    run.add_argument("--seeds", default=None, help="varredura, ex.: 0,1,2,3,4")
    run.set_defaults(func=cmd_run)

    train = sub.add_parser("train", help="treina um único preditor")
    train.add_argument("--config", default=None)
    train.add_argument("--predictor", required=True, choices=[k.value for k in PredictorKind])
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="avalia um checkpoint no split de teste")
    ev.add_argument("--config", default=None)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--predictor", default=None, choices=[k.value for k in PredictorKind])
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("report", help="imprime um report.json como tabela ou CSV")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--format", choices=["table", "csv"], default="table")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
