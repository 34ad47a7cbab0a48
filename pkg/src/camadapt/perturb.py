"""Bounded random camera-pose perturbations at three severity levels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camgeom import CameraModel, Pose, look_at, rotation_about
from .rng import TAG_PERTURB, CounterStream

T_CEILING = 0.15
R_CEILING = 60.0


@dataclass(frozen=True)
class PerturbationLevel:
    name: str
    t_max: float  # meters
    r_max: float  # degrees

    def __post_init__(self):
        if not 0 < self.t_max <= T_CEILING:
            raise ValueError(f"t_max must lie in (0, {T_CEILING}] m, got {self.t_max}")
        if not 0 < self.r_max <= R_CEILING:
            raise ValueError(f"r_max must lie in (0, {R_CEILING}] deg, got {self.r_max}")


SMALL = PerturbationLevel("small", 0.05, 15.0)
MEDIUM = PerturbationLevel("medium", 0.10, 30.0)
LARGE = PerturbationLevel("large", 0.15, 60.0)
DEFAULT_LEVELS = {lv.name: lv for lv in (SMALL, MEDIUM, LARGE)}


@dataclass(frozen=True)
class PerturbationSpec:
    level: PerturbationLevel
    seed: int
    retarget: bool = True


def sample_delta(spec: PerturbationSpec, draw_index: int) -> Pose:
    """Random rigid delta for draw ``draw_index`` of ``spec.seed``.

    Translation: uniform direction, length uniform in [t_max/2, t_max].
    Rotation: uniform axis, angle uniform in [r_max/2, r_max].
    """
    rs = CounterStream(spec.seed, TAG_PERTURB, draw_index)
    lv = spec.level
    t = rs.unit_vector() * rs.uniform(0.5 * lv.t_max, lv.t_max)
    axis = rs.unit_vector()
    angle = math.radians(rs.uniform(0.5 * lv.r_max, lv.r_max))
    return Pose(rotation_about(axis, angle), t)


def apply_perturbation(
    cam: CameraModel,
    delta: Pose,
    retarget: bool = False,
    target=(0.0, 0.0, 0.0),
) -> CameraModel:
    """Move the camera by ``delta`` expressed on its camera-to-world pose.

    The optical centre shifts by ``delta.translation`` (world frame) and the
    camera turns by ``delta.rotation`` about its own centre. With
    ``retarget`` the orientation is instead re-aimed at ``target`` with the
    image +y axis following world -z.
    """
    R_c2w = cam.pose.rotation.T
    center = cam.pose.center + delta.translation
    if retarget:
        return cam.with_pose(look_at(center, target))
    R = (R_c2w @ delta.rotation).T
    return cam.with_pose(Pose(R, -R @ center))


def perturb_camera(cam: CameraModel, spec: PerturbationSpec, draw_index: int = 0, target=(0.0, 0.0, 0.0)) -> CameraModel:
    return apply_perturbation(cam, sample_delta(spec, draw_index), spec.retarget, np.asarray(target, dtype=float))
