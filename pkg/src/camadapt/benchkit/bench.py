"""Benchmark sweep over methods x perturbation levels x seeds x episodes.

Outputs (all in ``out_dir``):

``episodes.csv``
    one row per (method, level, seed, episode); deterministic.
``matrix.csv``
    per-(method, level) aggregates computed from the episode rows only;
    deterministic.
``timing.csv``
    per-episode wall-clock latencies; varies between runs by nature.
``summary.txt``
    resolved settings and the matrix as a text table; deterministic.

Quality columns compare the adapted view of the perturbed camera with a
ground-truth render of its training pose, at the first step.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from ..adapt import (
    DepthReprojection,
    Homography,
    Identity,
    RemoteNvs,
    ServoPolicy,
    TaskSpec,
    calibrate,
    default_train_rig,
    run_episode,
)
from ..adapt.adapter import AUTO
from ..camgeom import CameraRig, Plane, load_rig
from ..inpaint import InpaintParams
from ..nvslink import MockConfig, MockServer
from ..perturb import PerturbationLevel, PerturbationSpec, perturb_camera
from ..rng import TAG_EPISODE, CounterStream
from ..scenesim import SceneConfig, sample_scene
from ..warpcore import SplatParams
from .config import NO_PERTURBATION, BenchConfig

EPISODE_START_HALF_WIDTH = 0.12


@dataclass(frozen=True)
class EpisodeRow:
    method: str
    level: str
    seed: int
    episode: int
    scene_seed: int
    t_max: float
    r_max: float
    retarget: bool
    success: bool
    steps: int
    final_distance: float
    psnr_valid: float
    psnr_full: float
    ssim: float
    fill_fraction: float
    fallbacks: int


@dataclass(frozen=True)
class TimingRow:
    method: str
    level: str
    seed: int
    episode: int
    steps: int
    synth_ms_mean: float
    synth_ms_max: float
    policy_ms_mean: float
    remote_ms_mean: float


@dataclass(frozen=True)
class Cell:
    method: str
    level: str
    t_max: float
    r_max: float
    episodes: int
    success_rate: float
    psnr_valid: float
    psnr_full: float
    ssim: float
    fill_fraction: float


@dataclass
class BenchmarkMatrix:
    methods: list[str]
    levels: list[str]
    cells: dict[tuple[str, str], Cell]
    rows: list[EpisodeRow]
    timing: list[TimingRow]
    calibration_checksum: str
    calibration_residual_px: float

    def __getitem__(self, key: tuple[str, str]) -> Cell:
        return self.cells[key]

    def latency_ms(self, method: str, level: str) -> float:
        vals = [t.synth_ms_mean for t in self.timing if (t.method, t.level) == (method, level)]
        return float(np.mean(vals)) if vals else math.nan


# --- episode setup -----------------------------------------------------------


def episode_setup(seed: int, episode: int) -> tuple[int, tuple[float, float]]:
    """Scene seed and proxy start point of one episode, shared by all cells."""
    rs = CounterStream(seed, TAG_EPISODE, episode)
    scene_seed = rs.next_u64() >> 1
    w = EPISODE_START_HALF_WIDTH
    return scene_seed, (rs.uniform(-w, w), rs.uniform(-w, w))


def train_rig_for(cfg: BenchConfig) -> CameraRig:
    if cfg.rig is not None:
        return load_rig(cfg.rig)
    return default_train_rig(cfg.image_size, SceneConfig(table_height=cfg.table_height))


def test_rig_for(cfg: BenchConfig, train_rig: CameraRig, level: str, seed: int, episode: int) -> CameraRig:
    if level == NO_PERTURBATION:
        return train_rig
    t_max, r_max = cfg.level(level)
    spec = PerturbationSpec(PerturbationLevel(level, t_max, r_max), seed, cfg.resolved_retarget)
    cam = perturb_camera(train_rig[cfg.perturb_camera], spec, episode, cfg.look_target)
    return train_rig.replace(cam)


def _method(cfg: BenchConfig, name: str, endpoint: str | None = None):
    plane = Plane.horizontal(cfg.table_height)
    inpaint = InpaintParams(radius=cfg.inpaint.radius)
    if name == "identity":
        return Identity()
    if name == "homography":
        return Homography(plane, inpaint)
    if name == "depth":
        return DepthReprojection(SplatParams(cfg.splat.radius, cfg.splat.z_eps), inpaint)
    fallback = AUTO if cfg.remote.fallback == "auto" else None
    return RemoteNvs(endpoint or cfg.remote.endpoint, cfg.remote.timeout_ms, fallback, plane)


_MOCK_MODES = {"oracle_nvs": "oracle", "geom_nvs": "geom"}


def _run_one(cfg: BenchConfig, policy: ServoPolicy, train_rig, method: str, level: str, seed: int, episode: int):
    scene_seed, start = episode_setup(seed, episode)
    scene = sample_scene(scene_seed, SceneConfig(table_height=cfg.table_height))
    test_rig = test_rig_for(cfg, train_rig, level, seed, episode)
    task = TaskSpec(cfg.task.instruction, tuple(cfg.task.target_color), cfg.task.success_radius)
    server = None
    if method in _MOCK_MODES:
        server = MockServer(MockConfig(_MOCK_MODES[method], scene))
    try:
        m = _method(cfg, method, server.endpoint if server else None)
        rep = run_episode(scene, test_rig, train_rig, m, task, policy, start, cfg.max_steps)
    finally:
        if server is not None:
            server.stop()

    q = next(v for v in rep.rows[0].quality if v.camera_id == cfg.perturb_camera)
    t_max, r_max = cfg.level(level)
    fallbacks = sum(r.method != m.name for r in rep.rows)
    row = EpisodeRow(
        method, level, seed, episode, scene_seed, t_max, r_max, cfg.resolved_retarget and level != NO_PERTURBATION,
        rep.success, rep.steps, rep.final_distance, q.psnr_valid, q.psnr_full, q.ssim, q.fill_fraction, fallbacks,
    )
    synth = [r.synth_ms for r in rep.rows]
    remote = [r.remote_ms for r in rep.rows if r.remote_ms is not None]
    timing = TimingRow(
        method, level, seed, episode, rep.steps, float(np.mean(synth)), float(np.max(synth)),
        float(np.mean([r.policy_ms for r in rep.rows])), float(np.mean(remote)) if remote else math.nan,
    )
    return row, timing


def _run_chunk(args):
    cfg, policy, train_rig, method, level, seed = args
    before = policy.calibration.checksum()
    out = [_run_one(cfg, policy, train_rig, method, level, seed, e) for e in range(cfg.episodes)]
    if policy.calibration.checksum() != before:
        raise RuntimeError("policy calibration changed during the benchmark")
    return out


# --- aggregation and output --------------------------------------------------


def _mean(vals) -> float:
    a = np.array([v for v in vals if math.isfinite(v)], dtype=np.float64)
    return float(a.mean()) if a.size else math.nan


def aggregate(rows: list[EpisodeRow], methods, levels) -> dict[tuple[str, str], Cell]:
    cells = {}
    for m in methods:
        for lv in levels:
            sel = [r for r in rows if r.method == m and r.level == lv]
            if not sel:
                continue
            cells[(m, lv)] = Cell(
                m, lv, sel[0].t_max, sel[0].r_max, len(sel),
                sum(r.success for r in sel) / len(sel),
                _mean(r.psnr_valid for r in sel), _mean(r.psnr_full for r in sel),
                _mean(r.ssim for r in sel), _mean(r.fill_fraction for r in sel),
            )
    return cells


def _cell_text(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows, cls) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(cls)])
    for r in rows:
        w.writerow([_cell_text(v) for v in astuple(r)])
    return buf.getvalue()


def read_episode_rows(text: str) -> list[EpisodeRow]:
    types = {f.name: f.type for f in fields(EpisodeRow)}
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        kw = {}
        for k, v in rec.items():
            t = types[k]
            kw[k] = v == "1" if t == "bool" else int(v) if t == "int" else float(v) if t == "float" else v
        out.append(EpisodeRow(**kw))
    return out


def summary_text(matrix: BenchmarkMatrix, cfg: BenchConfig) -> str:
    lines = [
        "camadapt benchmark summary",
        f"seeds: {' '.join(map(str, cfg.seeds))}  episodes per seed: {cfg.episodes}  max steps: {cfg.max_steps}",
        f"perturbed camera: {cfg.perturb_camera}  retarget: {cfg.resolved_retarget}  image size: {cfg.image_size}",
        f"inpaint radius: {cfg.inpaint.radius} px  splat: {cfg.splat.radius} px, z_eps {cfg.splat.z_eps} m",
        f"policy calibration: sha256 {matrix.calibration_checksum}  residual {matrix.calibration_residual_px:.4f} px",
        "levels:",
    ]
    for lv in matrix.levels:
        t, r = cfg.level(lv)
        lines.append(f"  {lv:<8} t_max {t:.3f} m  r_max {r:.1f} deg")
    lines.append("")
    lines.append(f"{'method':<12}{'level':<9}{'n':>5}{'success':>9}{'psnr_valid':>12}{'psnr_full':>11}{'ssim':>8}{'fill':>8}")
    for (m, lv), c in matrix.cells.items():
        lines.append(
            f"{m:<12}{lv:<9}{c.episodes:>5}{c.success_rate:>9.3f}{c.psnr_valid:>12.2f}{c.psnr_full:>11.2f}"
            f"{c.ssim:>8.4f}{c.fill_fraction:>8.4f}"
        )
    return "\n".join(lines) + "\n"


def run_benchmark(cfg: BenchConfig, out_dir=None) -> BenchmarkMatrix:
    """Run every (method, level, seed) chunk and write the reports.

    Chunks may run in worker processes; rows are merged in config order, so
    the output never depends on ``cfg.workers``.
    """
    train_rig = train_rig_for(cfg)
    calibration = calibrate(train_rig[cfg.perturb_camera], SceneConfig(table_height=cfg.table_height),
                            color=cfg.task.target_color)
    checksum = calibration.checksum()
    policy = ServoPolicy(cfg.perturb_camera, calibration)
    if cfg.perturb_camera not in train_rig.ids:
        raise ValueError(f"perturb_camera {cfg.perturb_camera!r} is not in the rig")

    jobs = [(cfg, policy, train_rig, m, lv, s) for m in cfg.methods for lv in cfg.levels for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(cfg.workers, len(jobs))) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(j) for j in jobs]
    if policy.calibration.checksum() != checksum:
        raise RuntimeError("policy calibration changed during the benchmark")

    rows = [r for chunk in results for r, _ in chunk]
    timing = [t for chunk in results for _, t in chunk]
    matrix = BenchmarkMatrix(
        list(cfg.methods), list(cfg.levels), aggregate(rows, cfg.methods, cfg.levels), rows, timing,
        checksum, calibration.residual_px,
    )
    if out_dir is not None:
        write_reports(matrix, cfg, out_dir)
    return matrix


def write_reports(matrix: BenchmarkMatrix, cfg: BenchConfig, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "episodes": (out / "episodes.csv", to_csv(matrix.rows, EpisodeRow)),
        "matrix": (out / "matrix.csv", to_csv(matrix.cells.values(), Cell)),
        "timing": (out / "timing.csv", to_csv(matrix.timing, TimingRow)),
        "summary": (out / "summary.txt", summary_text(matrix, cfg)),
    }
    for path, text in files.values():
        path.write_text(text)
    return {k: p for k, (p, _) in files.items()}
