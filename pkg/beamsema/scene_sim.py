# beamsema/scene_sim.py
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from beamsema.array_channel import Codebook, build_codebook, optimal_beam, synth_channel
from beamsema.pgm import DatasetIOError, write_pgm
from beamsema.schemas import ChannelConfig, NoiseConfig, SceneConfig, SplitSpec

MANIFEST_COLUMNS = [
    "sample_id", "scenario", "split", "pos_x", "pos_y",
    "bbox_xc", "bbox_yc", "bbox_w", "bbox_h",
    "mask_path", "raster_path", "beam_index", "missed",
]
POSES_COLUMNS = ["sample_id", "tx_x", "tx_y", "azimuth", "range"]

# Fluxos aleatórios derivados por amostra: [seed, sample_id, STREAM]
STREAM_SCENE = 0
STREAM_CHANNEL = 1
STREAM_NOISE = 2

_MAX_PLACEMENT_ATTEMPTS = 64
_MIN_GRAY_GAP = 0.05


class GenerationError(RuntimeError):
    pass


class ProjectionError(RuntimeError):
    pass


# --------------------------------------------------------------------------------------
# Modelo de dados
# --------------------------------------------------------------------------------------

@dataclass(frozen=True)
class VehiclePose:
    x: float                # centro no plano do chão (m)
    y: float
    heading: float          # ângulo da direção da via (rad, em relação a +x)
    length: float
    width: float
    height: float
    gray: float = 0.5       # nível de cinza no raster

    @property
    def range(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class SceneFrame:
    transmitter: VehiclePose
    distractors: Tuple[VehiclePose, ...] = ()

    @property
    def azimuth(self) -> float:
        return math.atan2(self.transmitter.x, self.transmitter.y)

    @property
    def range(self) -> float:
        return self.transmitter.range

    def vehicles(self) -> List[VehiclePose]:
        return [self.transmitter, *self.distractors]


@dataclass(frozen=True)
class PixelBBox:
    x_c: float
    y_c: float
    w: float
    h: float

    @property
    def edges(self) -> Tuple[float, float, float, float]:
        return (self.x_c - self.w / 2, self.y_c - self.h / 2, self.x_c + self.w / 2, self.y_c + self.h / 2)

    @classmethod
    def from_edges(cls, x0: float, y0: float, x1: float, y1: float) -> "PixelBBox":
        return cls(x_c=(x0 + x1) / 2, y_c=(y0 + y1) / 2, w=x1 - x0, h=y1 - y0)


@dataclass
class Sample:
    sample_id: int
    gps: np.ndarray                 # (2,) metros
    clean_bbox: PixelBBox
    bbox: PixelBBox
    mask: np.ndarray                # (H, W) bool
    raster: np.ndarray              # (H, W) float em [0,1]
    beam: int
    split: str = ""
    missed: bool = False
    frame: Optional[SceneFrame] = field(default=None, repr=False)


# --------------------------------------------------------------------------------------
# Amostragem da cena
# --------------------------------------------------------------------------------------

def _road_axes(cfg: SceneConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
    """Origem, direção unitária, normal (esquerda da direção), comprimento e heading da via."""
    start = np.asarray(cfg.road_start, dtype=np.float64)
    delta = np.asarray(cfg.road_end, dtype=np.float64) - start
    length = float(np.hypot(*delta))
    direction = delta / length if length > 0 else np.array([1.0, 0.0])
    normal = np.array([-direction[1], direction[0]])
    heading = math.atan2(direction[1], direction[0])
    return start, direction, normal, length, heading


def _overlaps(a: Tuple[float, float, float, float], b: Tuple[float, float, float, float]) -> bool:
    """Pegadas alinhadas à via: (s, l, comprimento, largura)."""
    return abs(a[0] - b[0]) < (a[2] + b[2]) / 2 and abs(a[1] - b[1]) < (a[3] + b[3]) / 2


def _pick_gray(rng: np.random.Generator, taken: List[float]) -> float:
    for _ in range(_MAX_PLACEMENT_ATTEMPTS):
        g = float(rng.uniform(0.05, 0.95))
        if all(abs(g - t) >= _MIN_GRAY_GAP for t in taken):
            return g
    raise GenerationError("não foi possível escolher níveis de cinza distintos para os veículos")


def sample_scene(cfg: SceneConfig, rng: np.random.Generator) -> SceneFrame:
    """
    Sorteia um quadro: transmissor uniforme ao longo da via (faixa 0), distratores
    em faixas aleatórias sem sobrepor a pegada do transmissor nem entre si.
    """
    start, direction, normal, road_len, heading = _road_axes(cfg)
    tx_len, tx_wid, tx_hgt = cfg.transmitter_dims

    s_tx = float(rng.uniform(0.0, road_len)) if road_len > 0 else 0.0
    grays: List[float] = []
    tx_gray = _pick_gray(rng, grays)
    grays.append(tx_gray)
    pos = start + s_tx * direction
    transmitter = VehiclePose(float(pos[0]), float(pos[1]), heading, tx_len, tx_wid, tx_hgt, tx_gray)

    lo, hi = cfg.num_distractors_range
    count = int(rng.integers(lo, hi + 1))
    footprints = [(s_tx, 0.0, tx_len, tx_wid)]
    distractors: List[VehiclePose] = []
    for _ in range(count):
        for _attempt in range(_MAX_PLACEMENT_ATTEMPTS):
            lane = float(cfg.lane_offsets[int(rng.integers(0, len(cfg.lane_offsets)))])
            s = float(rng.uniform(0.0, road_len)) if road_len > 0 else 0.0
            length = float(rng.uniform(*cfg.vehicle_length_range))
            width = float(rng.uniform(*cfg.vehicle_width_range))
            height = float(rng.uniform(*cfg.vehicle_height_range))
            fp = (s, lane, length, width)
            if not any(_overlaps(fp, other) for other in footprints):
                break
        else:
            raise GenerationError(
                f"região viável vazia: não coube o distrator {len(distractors) + 1} de {count} na via"
            )
        footprints.append(fp)
        gray = _pick_gray(rng, grays)
        grays.append(gray)
        p = start + s * direction + lane * normal
        distractors.append(VehiclePose(float(p[0]), float(p[1]), heading, length, width, height, gray))
    return SceneFrame(transmitter=transmitter, distractors=tuple(distractors))


# --------------------------------------------------------------------------------------
# Projeção pinhole
# --------------------------------------------------------------------------------------

def vehicle_corners(v: VehiclePose) -> np.ndarray:
    """Oito cantos (x, y, z) da caixa do veículo."""
    d = np.array([math.cos(v.heading), math.sin(v.heading)])
    n = np.array([-d[1], d[0]])
    corners = []
    for sl in (-0.5, 0.5):
        for sw in (-0.5, 0.5):
            xy = np.array([v.x, v.y]) + sl * v.length * d + sw * v.width * n
            for z in (0.0, v.height):
                corners.append((xy[0], xy[1], z))
    return np.asarray(corners, dtype=np.float64)


def project_points(points: np.ndarray, cfg: SceneConfig) -> np.ndarray:
    """(N, 3) pontos do mundo -> (N, 2) pixels (u, v). Câmera na origem olhando para +y."""
    depth = points[:, 1]
    if np.any(depth <= 1e-6):
        raise ProjectionError("ponto atrás da câmera")
    u = cfg.image_width / 2.0 + cfg.focal_length * points[:, 0] / depth
    v = cfg.image_height / 2.0 + cfg.focal_length * (cfg.camera_height - points[:, 2]) / depth
    return np.stack([u, v], axis=1)


def vehicle_bbox(v: VehiclePose, cfg: SceneConfig) -> PixelBBox:
    uv = project_points(vehicle_corners(v), cfg)
    x0 = float(np.clip(uv[:, 0].min(), 0, cfg.image_width))
    x1 = float(np.clip(uv[:, 0].max(), 0, cfg.image_width))
    y0 = float(np.clip(uv[:, 1].min(), 0, cfg.image_height))
    y1 = float(np.clip(uv[:, 1].max(), 0, cfg.image_height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise ProjectionError("veículo fora da imagem")
    return PixelBBox.from_edges(x0, y0, x1, y1)


def project_bbox(frame: SceneFrame, cfg: SceneConfig) -> PixelBBox:
    """Envoltória alinhada aos eixos dos 8 cantos projetados do transmissor, recortada à imagem."""
    return vehicle_bbox(frame.transmitter, cfg)


# --------------------------------------------------------------------------------------
# Rasterização
# --------------------------------------------------------------------------------------

def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Cadeia monótona; devolve vértices em ordem anti-horária (sem repetir o primeiro)."""
    pts = sorted(set(map(tuple, np.round(points, 12))))
    if len(pts) <= 2:
        return np.asarray(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[tuple] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[tuple] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def _silhouette(v: VehiclePose, cfg: SceneConfig) -> Tuple[np.ndarray, slice, slice]:
    """Preenche a envoltória convexa projetada testando centros de pixel dentro da bbox recortada."""
    bbox = vehicle_bbox(v, cfg)
    x0, y0, x1, y1 = bbox.edges
    c0, c1 = int(math.floor(x0)), min(int(math.ceil(x1)), cfg.image_width)
    r0, r1 = int(math.floor(y0)), min(int(math.ceil(y1)), cfg.image_height)
    cols = np.arange(c0, c1) + 0.5
    rows = np.arange(r0, r1) + 0.5
    uu, vv = np.meshgrid(cols, rows)
    inside = (uu >= x0) & (uu <= x1) & (vv >= y0) & (vv <= y1)

    hull = _convex_hull(project_points(vehicle_corners(v), cfg))
    if len(hull) >= 3:
        for i in range(len(hull)):
            a, b = hull[i], hull[(i + 1) % len(hull)]
            inside &= (b[0] - a[0]) * (vv - a[1]) - (b[1] - a[1]) * (uu - a[0]) >= -1e-9
    else:
        inside[:] = False

    if not inside.any():
        # silhueta menor que um pixel: marca o pixel do centro da caixa
        rc = min(int(bbox.y_c), r1 - 1) - r0
        cc = min(int(bbox.x_c), c1 - 1) - c0
        inside[rc, cc] = True
    return inside, slice(r0, r1), slice(c0, c1)


def render_mask(frame: SceneFrame, cfg: SceneConfig) -> np.ndarray:
    """Máscara binária (H, W) com a silhueta preenchida apenas do transmissor."""
    mask = np.zeros((cfg.image_height, cfg.image_width), dtype=bool)
    patch, rows, cols = _silhouette(frame.transmitter, cfg)
    mask[rows, cols] |= patch
    return mask


def render_background(cfg: SceneConfig) -> np.ndarray:
    h, w = cfg.image_height, cfg.image_width
    horizon = h / 2.0
    r = np.arange(h, dtype=np.float64) + 0.5
    sky = 0.75 - 0.25 * (r / horizon)
    ground = 0.30 + 0.20 * ((r - horizon) / (h - horizon))
    column = np.where(r < horizon, sky, ground)
    if cfg.lighting == "night":
        column = column * 0.25
    return np.tile(column[:, None], (1, w))


def rasterize_scene(vehicles: Sequence[VehiclePose], cfg: SceneConfig) -> np.ndarray:
    """Fundo em gradiente + silhuetas desenhadas do mais distante para o mais próximo."""
    raster = render_background(cfg)
    for v in sorted(vehicles, key=lambda item: item.range, reverse=True):
        try:
            patch, rows, cols = _silhouette(v, cfg)
        except ProjectionError:
            continue
        region = raster[rows, cols]
        region[patch] = v.gray
    return raster


def render_raster(frame: SceneFrame, cfg: SceneConfig) -> np.ndarray:
    """Raster em tons de cinza (H, W); o transmissor não recebe marcação especial."""
    return rasterize_scene(frame.vehicles(), cfg)


# --------------------------------------------------------------------------------------
# Ruído do detector
# --------------------------------------------------------------------------------------

def _jitter_bbox(b: PixelBBox, sigma: float, width: int, height: int, rng: np.random.Generator) -> PixelBBox:
    # σ é o deslocamento absoluto médio; para a gaussiana, E|N(0, s)| = s·√(2/π)
    scale = sigma * math.sqrt(math.pi / 2.0)
    dxc, dyc, dw, dh = rng.normal(0.0, 1.0, size=4)
    xc = b.x_c + dxc * scale * b.w
    yc = b.y_c + dyc * scale * b.h
    w = max(b.w + dw * scale * b.w, 1.0)
    h = max(b.h + dh * scale * b.h, 1.0)
    x0, x1 = np.clip([xc - w / 2, xc + w / 2], 0, width)
    y0, y1 = np.clip([yc - h / 2, yc + h / 2], 0, height)
    if x1 - x0 < 1.0:
        x0, x1 = (x0, x0 + 1.0) if x0 + 1.0 <= width else (width - 1.0, width)
    if y1 - y0 < 1.0:
        y0, y1 = (y0, y0 + 1.0) if y0 + 1.0 <= height else (height - 1.0, height)
    return PixelBBox.from_edges(float(x0), float(y0), float(x1), float(y1))


def _boundary(mask: np.ndarray) -> np.ndarray:
    """Pixels cuja vizinhança-4 mistura 0 e 1 (dos dois lados da borda)."""
    padded = np.pad(mask, 1, mode="edge")
    center = padded[1:-1, 1:-1]
    differs = np.zeros_like(mask, dtype=bool)
    for dr, dc in ((0, 1), (2, 1), (1, 0), (1, 2)):
        differs |= padded[dr:dr + mask.shape[0], dc:dc + mask.shape[1]] != center
    return differs


def _noisy_mask(mask: np.ndarray, noise: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    out = mask.copy()
    if noise.mask_flip_prob > 0:
        rr, cc = np.nonzero(_boundary(mask))
        flip = rng.random(rr.size) < noise.mask_flip_prob
        out[rr[flip], cc[flip]] = ~out[rr[flip], cc[flip]]
    if noise.mask_speckle_prob > 0:
        n = int(rng.binomial(out.size, noise.mask_speckle_prob))
        idx = rng.integers(0, out.size, size=n)
        out.flat[idx] = True
    return out


def perturb_detection(sample: Sample, noise: NoiseConfig, rng: np.random.Generator) -> Sample:
    """
    Aplica o modelo de ruído do detector: jitter gaussiano da bbox (recortada à imagem),
    troca de pixels de borda e speckle na máscara, ruído gaussiano no GPS e, com
    probabilidade miss_prob, marca a amostra como perdida.
    """
    height, width = sample.mask.shape
    bbox = sample.bbox
    if noise.bbox_jitter > 0:
        bbox = _jitter_bbox(bbox, noise.bbox_jitter, width, height, rng)
    mask = sample.mask
    if noise.mask_flip_prob > 0 or noise.mask_speckle_prob > 0:
        mask = _noisy_mask(mask, noise, rng)
    gps = sample.gps
    if noise.gps_sigma > 0:
        gps = gps + rng.normal(0.0, noise.gps_sigma, size=2)
    missed = sample.missed
    if noise.miss_prob > 0:
        missed = missed or bool(rng.random() < noise.miss_prob)
    return replace(sample, bbox=bbox, mask=mask, gps=gps, missed=missed)


# --------------------------------------------------------------------------------------
# Dataset
# --------------------------------------------------------------------------------------

def derived_rng(seed: int, sample_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(sample_id), int(stream)])


def _check_coverage(scene: SceneConfig, channel: ChannelConfig) -> None:
    theta_max = math.radians(channel.coverage_deg)
    for x, y in (scene.road_start, scene.road_end):
        if abs(math.atan2(x, y)) > theta_max:
            raise GenerationError(
                f"ponto da via ({x}, {y}) fora da cobertura do codebook (±{channel.coverage_deg}°)"
            )


def generate_sample(
    sample_id: int,
    scene: SceneConfig,
    channel: ChannelConfig,
    noise: NoiseConfig,
    seed: int,
    cb: Codebook,
) -> Sample:
    frame = sample_scene(scene, derived_rng(seed, sample_id, STREAM_SCENE))
    h = synth_channel(frame.azimuth, frame.range, channel, derived_rng(seed, sample_id, STREAM_CHANNEL))
    beam = optimal_beam(h, cb, channel)
    bbox = project_bbox(frame, scene)
    clean = Sample(
        sample_id=sample_id,
        gps=np.array([frame.transmitter.x, frame.transmitter.y]),
        clean_bbox=bbox,
        bbox=bbox,
        mask=render_mask(frame, scene),
        raster=render_raster(frame, scene),
        beam=beam,
        frame=frame,
    )
    return perturb_detection(clean, noise, derived_rng(seed, sample_id, STREAM_NOISE))


def _write_sample_files(sample: Sample, out_dir: Path) -> Tuple[str, str]:
    mask_rel = f"masks/{sample.sample_id:05d}.pgm"
    raster_rel = f"rasters/{sample.sample_id:05d}.pgm"
    write_pgm(out_dir / mask_rel, sample.mask)
    write_pgm(out_dir / raster_rel, sample.raster)
    return mask_rel, raster_rel


def write_csv(df: pd.DataFrame, path: Path, float_format: str) -> None:
    try:
        df.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    except OSError as e:
        raise DatasetIOError(f"[DATASET] falha ao gravar {path}: {e}") from e


def generate_dataset(
    scene: SceneConfig,
    channel: ChannelConfig,
    noise: NoiseConfig,
    seed: int,
    out_dir: Path | str,
    scenario: str = "custom",
    split: SplitSpec | None = None,
    threads: int = 1,
    progress: bool = False,
    extra_meta: Dict[str, Any] | None = None,
) -> pd.DataFrame:
    """
    Gera U amostras (máscaras e rasters em PGM, manifesto CSV, poses e metadados).
    Totalmente reprodutível a partir de (configs, seed); a ordem do manifesto é por sample_id.
    """
    from beamsema.harness import split_dataset  # evita import circular

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetIOError(f"[DATASET] diretório de saída não gravável: {out_dir}: {e}") from e
    _check_coverage(scene, channel)
    cb = build_codebook(channel)
    total = scene.num_samples
    logger.info(f"[DATASET] gerando {total} amostras ({scenario}, seed={seed}, threads={threads}) em {out_dir}")

    def _one(i: int) -> Tuple[Dict[str, Any], Dict[str, Any]]:
        s = generate_sample(i, scene, channel, noise, seed, cb)
        mask_rel, raster_rel = _write_sample_files(s, out_dir)
        row = {
            "sample_id": s.sample_id,
            "scenario": scenario,
            "split": "",
            "pos_x": float(s.gps[0]),
            "pos_y": float(s.gps[1]),
            "bbox_xc": s.bbox.x_c,
            "bbox_yc": s.bbox.y_c,
            "bbox_w": s.bbox.w,
            "bbox_h": s.bbox.h,
            "mask_path": mask_rel,
            "raster_path": raster_rel,
            "beam_index": int(s.beam),
            "missed": int(s.missed),
        }
        tx = s.frame.transmitter  # type: ignore[union-attr]
        pose = {"sample_id": s.sample_id, "tx_x": tx.x, "tx_y": tx.y,
                "azimuth": s.frame.azimuth, "range": s.frame.range}  # type: ignore[union-attr]
        return row, pose

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(tqdm(pool.map(_one, range(total)), total=total, disable=not progress, desc="gen"))

    manifest = pd.DataFrame([r for r, _ in results], columns=MANIFEST_COLUMNS)
    manifest = split_dataset(manifest, split or SplitSpec(seed=seed))
    poses = pd.DataFrame([p for _, p in results], columns=POSES_COLUMNS)

    write_csv(manifest, out_dir / "manifest.csv", "%.6f")
    write_csv(poses, out_dir / "poses.csv", "%.17g")
    meta = {
        "scenario": scenario,
        "seed": int(seed),
        "num_samples": total,
        "scene": scene.model_dump(),
        "channel": channel.model_dump(),
        "noise": noise.model_dump(),
        **(extra_meta or {}),
    }
    try:
        (out_dir / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"[DATASET] falha ao gravar {out_dir / 'dataset.json'}: {e}") from e

    missed = int(manifest["missed"].sum())
    logger.info(f"[DATASET] concluído: {total} amostras, {missed} perdidas pelo detector")
    return manifest


def load_dataset_meta(dataset_dir: Path | str) -> Dict[str, Any]:
    path = Path(dataset_dir) / "dataset.json"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise DatasetIOError(f"[DATASET] metadados ilegíveis em {path}: {e}") from e


def read_manifest(dataset_dir: Path | str) -> pd.DataFrame:
    path = Path(dataset_dir) / "manifest.csv"
    if not path.exists():
        raise DatasetIOError(f"[DATASET] manifesto não encontrado: {path}")
    try:
        return pd.read_csv(path, keep_default_na=False)
    except (OSError, ValueError) as e:
        raise DatasetIOError(f"[DATASET] manifesto ilegível: {path}: {e}") from e


def audit_labels(dataset_dir: Path | str) -> int:
    """
    Recalcula optimal_beam de cada amostra a partir da pose gravada e do fluxo de
    canal derivado; devolve o número de rótulos divergentes (0 = dataset consistente).
    """
    dataset_dir = Path(dataset_dir)
    meta = load_dataset_meta(dataset_dir)
    scene = SceneConfig(**meta["scene"])
    channel = ChannelConfig(**meta["channel"])
    seed = int(meta["seed"])
    cb = build_codebook(channel)
    manifest = read_manifest(dataset_dir).set_index("sample_id")
    try:
        poses = pd.read_csv(dataset_dir / "poses.csv")
    except (OSError, ValueError) as e:
        raise DatasetIOError(f"[DATASET] poses ilegíveis em {dataset_dir / 'poses.csv'}: {e}") from e

    mismatches = 0
    for row in poses.itertuples(index=False):
        sid = int(row.sample_id)
        frame = sample_scene(scene, derived_rng(seed, sid, STREAM_SCENE))
        if not (math.isclose(frame.transmitter.x, row.tx_x, abs_tol=1e-9)
                and math.isclose(frame.transmitter.y, row.tx_y, abs_tol=1e-9)):
            logger.warning(f"[DATASET] pose divergente na amostra {sid}")
            mismatches += 1
            continue
        h = synth_channel(row.azimuth, row.range, channel, derived_rng(seed, sid, STREAM_CHANNEL))
        if optimal_beam(h, cb, channel) != int(manifest.loc[sid, "beam_index"]):
            mismatches += 1
    logger.info(f"[DATASET] auditoria de rótulos: {mismatches} divergências em {len(poses)} amostras")
    return mismatches
