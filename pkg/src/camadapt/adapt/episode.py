"""Closed-loop episodes: observe, adapt, act.

The end effector is a 2D proxy point on the table that moves exactly by the
commanded displacement. It is not rendered, so the camera images are
constant within an episode and are rendered once per episode.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..benchkit.metrics import psnr, ssim
from ..camgeom import CameraModel, CameraRig, Intrinsics, look_at
from ..nvslink import NvsClient
from ..scenesim import SceneConfig, SceneDescription, goal_sphere, render
from .adapter import FrameSet, RemoteNvs, View, adapt
from .policy import Action, ServoPolicy, TaskSpec

AGENT = "agent"
WRIST = "wrist"
MAX_STEPS = 25


def default_train_rig(size: int = 256, config: SceneConfig = SceneConfig()) -> CameraRig:
    """Canonical two-camera rig.

    The agent camera looks almost straight down (2 degrees of tilt) from
    0.8 m so a single affine map from pixels to the table is accurate to
    well under a pixel; the wrist camera is an oblique view.
    """
    h = config.table_height
    dist, tilt = 0.8, math.radians(2.0)
    fov_agent = 2.0 * math.degrees(math.atan(0.18 / dist))
    agent = CameraModel(
        AGENT,
        Intrinsics.from_fov(size, size, fov_agent),
        look_at([0.0, -dist * math.sin(tilt), h + dist * math.cos(tilt)], [0.0, 0.0, h]),
    )
    wrist = CameraModel(
        WRIST,
        Intrinsics.from_fov(size, size, 55.0),
        look_at([0.32, -0.22, h + 0.42], [0.0, 0.0, h]),
    )
    return CameraRig((agent, wrist))


@dataclass(frozen=True)
class ViewQuality:
    camera_id: str
    psnr_valid: float
    psnr_full: float
    ssim: float
    fill_fraction: float


@dataclass
class StepRow:
    t: int
    method: str
    synth_ms: float
    policy_ms: float
    action: Action
    effector_xy: tuple[float, float]
    quality: list[ViewQuality] = field(default_factory=list)
    remote_ms: float | None = None


def view_quality(view: View, oracle: np.ndarray) -> ViewQuality:
    mask = view.mask
    if mask is not None and mask.any():
        pv = psnr(view.image, oracle, mask)
    elif mask is None:
        pv = psnr(view.image, oracle)
    else:
        pv = float("nan")
    return ViewQuality(view.camera_id, pv, psnr(view.image, oracle), ssim(view.image, oracle), view.fill_fraction)


def run_step(
    frames: FrameSet,
    test_rig: CameraRig,
    train_rig: CameraRig,
    method,
    policy: ServoPolicy,
    task: TaskSpec,
    effector_xy=(0.0, 0.0),
    client: NvsClient | None = None,
    oracle: dict[str, np.ndarray] | None = None,
) -> tuple[Action, StepRow]:
    """Adapt the frames to the training rig and query the frozen policy."""
    t0 = time.perf_counter()
    adapted = adapt(frames, test_rig, train_rig, method, client)
    t1 = time.perf_counter()
    action = policy(adapted[policy.camera_id].image, task, effector_xy)
    t2 = time.perf_counter()
    row = StepRow(
        frames.t,
        adapted.meta.get("method", getattr(method, "name", "?")),
        (t1 - t0) * 1e3,
        (t2 - t1) * 1e3,
        action,
        (float(effector_xy[0]), float(effector_xy[1])),
        remote_ms=adapted.meta.get("remote_latency_ms"),
    )
    if oracle is not None:
        row.quality = [view_quality(v, oracle[v.camera_id]) for v in adapted.views if v.camera_id in oracle]
    return action, row


@dataclass
class EpisodeReport:
    rows: list[StepRow]
    success: bool
    steps: int
    final_distance: float
    start_xy: tuple[float, float]
    goal_xy: tuple[float, float]
    frames: list[FrameSet] = field(default_factory=list)


def render_frames(scene: SceneDescription, rig: CameraRig, t: int = 0) -> FrameSet:
    views = []
    for cam in rig:
        out = render(scene, cam)
        views.append(View(cam.id, out.image, out.depth))
    return FrameSet(t, tuple(views))


def run_episode(
    scene: SceneDescription,
    test_rig: CameraRig,
    train_rig: CameraRig,
    method,
    task: TaskSpec,
    policy: ServoPolicy,
    start_xy=(0.0, -0.12),
    max_steps: int = MAX_STEPS,
    measure_quality: bool = True,
    keep_frames: bool = False,
) -> EpisodeReport:
    goal = goal_sphere(scene, task.target_color)
    goal_xy = np.array(goal.center[:2])
    frames0 = render_frames(scene, test_rig)
    oracle = None
    if measure_quality:
        oracle = {cam.id: render(scene, cam).image for cam in train_rig}
    client = NvsClient(method.endpoint, method.timeout_ms) if isinstance(method, RemoteNvs) else None
    eff = np.array(start_xy, dtype=np.float64)
    rows: list[StepRow] = []
    kept: list[FrameSet] = []
    success = False
    try:
        for t in range(max_steps):
            frames = FrameSet(t, frames0.views)
            action, row = run_step(frames, test_rig, train_rig, method, policy, task, eff, client, oracle)
            rows.append(row)
            if keep_frames:
                kept.append(adapt(frames, test_rig, train_rig, method, client))
            if action.done:
                break
            eff = eff + np.array([action.dx, action.dy])
            if np.hypot(*(eff - goal_xy)) < task.success_radius:
                success = True
                break
    finally:
        if client is not None:
            client.close()
    dist = float(np.hypot(*(eff - goal_xy)))
    success = success or dist < task.success_radius
    return EpisodeReport(rows, success, len(rows), dist, tuple(start_xy), tuple(goal_xy), kept)
