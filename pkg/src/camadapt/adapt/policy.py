"""Colour-servo policy with a fixed pixel-to-table affine calibration.

The policy is deliberately brittle: the calibration is fitted once on the
canonical camera and never updated, so any viewpoint change shows up as a
wrong target estimate.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from ..camgeom import CameraModel, Plane
from ..scenesim import GOAL_COLOR, SceneConfig, SceneDescription, Sphere, Table, render

STEP_CAP = 0.05


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    instruction: str = "reach the red sphere"
    target_color: tuple[int, int, int] = GOAL_COLOR
    success_radius: float = 0.01

    def __post_init__(self):
        if not self.success_radius > 0:
            raise ValueError("success radius must be positive")


@dataclass(frozen=True)
class Action:
    dx: float
    dy: float
    done: bool

    def __post_init__(self):
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValueError("action must be finite")
        if math.hypot(self.dx, self.dy) > STEP_CAP + 1e-12:
            raise ValueError("action exceeds the step cap")


@dataclass(frozen=True, eq=False)
class PixelToWorldMap:
    """Affine map from pixel (u, v) to table (x, y) in meters."""

    matrix: np.ndarray  # (2, 3)
    residual_px: float

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError("calibration matrix must be 2x3")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, uv) -> np.ndarray:
        u, v = uv
        return self.matrix @ np.array([u, v, 1.0])

    def to_pixel(self, xy) -> np.ndarray:
        A, b = self.matrix[:, :2], self.matrix[:, 2]
        return np.linalg.solve(A, np.asarray(xy, dtype=np.float64) - b)

    def checksum(self) -> str:
        return hashlib.sha256(self.matrix.tobytes()).hexdigest()


@dataclass(frozen=True)
class Segmenter:
    """Selects pixels whose chromaticity is close to the target colour."""

    chroma_tol: float = 0.1
    min_brightness: float = 60.0
    min_pixels: int = 5

    def mask(self, img: np.ndarray, color) -> np.ndarray:
        f = np.asarray(img, dtype=np.float64)
        s = f.sum(axis=-1)
        c = np.asarray(color, dtype=np.float64)
        target = c / c.sum()
        with np.errstate(invalid="ignore", divide="ignore"):
            chroma = f / s[..., None]
        dist = np.linalg.norm(chroma - target, axis=-1)
        return (s >= self.min_brightness) & (dist <= self.chroma_tol)

    def centroid(self, img: np.ndarray, color) -> np.ndarray | None:
        m = self.mask(img, color)
        if m.sum() < self.min_pixels:
            return None
        vv, uu = np.nonzero(m)
        return np.array([uu.mean(), vv.mean()])


def servo_policy(
    view: np.ndarray,
    task: TaskSpec,
    calibration: PixelToWorldMap,
    effector_xy,
    segmenter: Segmenter = Segmenter(),
    step_cap: float = STEP_CAP,
) -> Action:
    """Capped step from the effector toward the detected target.

    No detection gives a zero action that is not done.
    """
    c = segmenter.centroid(view, task.target_color)
    if c is None:
        return Action(0.0, 0.0, False)
    goal = calibration(c)
    delta = goal - np.asarray(effector_xy, dtype=np.float64)
    dist = float(np.hypot(*delta))
    if dist < task.success_radius:
        return Action(0.0, 0.0, True)
    if dist > step_cap:
        delta = delta * (step_cap / dist)
    return Action(float(delta[0]), float(delta[1]), False)


def calibration_scene(xy, config: SceneConfig = SceneConfig(), color=GOAL_COLOR) -> SceneDescription:
    h = config.table_height
    r = config.goal_radius
    return SceneDescription(
        table=Table(Plane.horizontal(h)), objects=(Sphere((xy[0], xy[1], h + r), r, color),)
    )


def calibrate(
    cam: CameraModel,
    config: SceneConfig = SceneConfig(),
    grid: int = 5,
    extent: float = 0.12,
    segmenter: Segmenter = Segmenter(),
    color=GOAL_COLOR,
    max_residual_px: float = 1.0,
) -> PixelToWorldMap:
    """Least-squares affine fit on target renders over a square grid."""
    pix, world = [], []
    for x in np.linspace(-extent, extent, grid):
        for y in np.linspace(-extent, extent, grid):
            img = render(calibration_scene((x, y), config, color), cam).image
            c = segmenter.centroid(img, color)
            if c is None:
                raise CalibrationError(f"target at ({x:.3f}, {y:.3f}) not visible in camera {cam.id!r}")
            pix.append(c)
            world.append((x, y))
    P = np.c_[np.array(pix), np.ones(len(pix))]
    W = np.array(world)
    M, *_ = np.linalg.lstsq(P, W, rcond=None)
    A = M[:2].T
    err = P @ M - W
    res_px = float(np.max(np.linalg.norm(np.linalg.solve(A, err.T).T, axis=1)))
    if res_px >= max_residual_px:
        raise CalibrationError(f"affine calibration residual {res_px:.3f} px exceeds {max_residual_px} px")
    return PixelToWorldMap(M.T, res_px)


@dataclass(frozen=True)
class ServoPolicy:
    """Frozen policy bound to one canonical camera."""

    camera_id: str
    calibration: PixelToWorldMap
    segmenter: Segmenter = Segmenter()
    step_cap: float = STEP_CAP

    def __call__(self, view: np.ndarray, task: TaskSpec, effector_xy) -> Action:
        return servo_policy(view, task, self.calibration, effector_xy, self.segmenter, self.step_cap)
