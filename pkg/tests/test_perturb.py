import math

import numpy as np
import pytest

from camadapt.camgeom import GeometryError, Pose, project, rotation_angle
from camadapt.perturb import (
    LARGE,
    MEDIUM,
    SMALL,
    PerturbationLevel,
    PerturbationSpec,
    apply_perturbation,
    perturb_camera,
    sample_delta,
)


@pytest.mark.parametrize("level", [SMALL, MEDIUM, LARGE])
def test_delta_bounds(level):
    spec = PerturbationSpec(level, seed=3)
    for k in range(2000):
        d = sample_delta(spec, k)
        t = np.linalg.norm(d.translation)
        a = math.degrees(rotation_angle(d.rotation))
        assert 0.5 * level.t_max - 1e-12 <= t <= level.t_max + 1e-12
        assert 0.5 * level.r_max - 1e-9 <= a <= level.r_max + 1e-9


def test_large_level_never_exceeds_ceiling():
    spec = PerturbationSpec(LARGE, seed=0)
    for k in range(0, 100_000, 7):
        d = sample_delta(spec, k)
        assert np.linalg.norm(d.translation) <= 0.15 + 1e-12
        assert rotation_angle(d.rotation) <= math.radians(60.0) + 1e-12


def test_tiny_level_gives_near_identity():
    tiny = PerturbationLevel("tiny", 1e-14, 1e-12)
    d = sample_delta(PerturbationSpec(tiny, 5), 0)
    assert d.allclose(Pose.identity(), 1e-12)


def test_translation_directions_are_uniform():
    spec = PerturbationSpec(MEDIUM, seed=42)
    dirs = [sample_delta(spec, k).translation for k in range(10_000)]
    dirs = np.array([d / np.linalg.norm(d) for d in dirs])
    assert np.linalg.norm(dirs.mean(axis=0)) < 0.05


def test_deterministic_per_seed_and_draw():
    a = sample_delta(PerturbationSpec(LARGE, 9), 4)
    assert a == sample_delta(PerturbationSpec(LARGE, 9), 4)
    assert not a.allclose(sample_delta(PerturbationSpec(LARGE, 9), 5))
    assert not a.allclose(sample_delta(PerturbationSpec(LARGE, 10), 4))


def test_level_validation():
    with pytest.raises(ValueError):
        PerturbationLevel("x", 0.2, 10.0)
    with pytest.raises(ValueError):
        PerturbationLevel("x", 0.1, 61.0)
    with pytest.raises(ValueError):
        PerturbationLevel("x", 0.0, 10.0)


def test_identity_delta_leaves_camera(rig):
    cam = rig["wrist"]
    assert apply_perturbation(cam, Pose.identity()).pose.allclose(cam.pose, 1e-15)


def test_pure_translation_moves_centre_exactly(rig):
    cam = rig["wrist"]
    t = np.array([0.03, -0.04, 0.12])
    moved = apply_perturbation(cam, Pose(np.eye(3), t))
    assert np.linalg.norm(moved.pose.center - cam.pose.center) == pytest.approx(np.linalg.norm(t), abs=1e-12)
    np.testing.assert_allclose(moved.pose.rotation, cam.pose.rotation, atol=1e-15)


def test_rotation_turns_about_the_centre(rig):
    cam = rig["agent"]
    d = sample_delta(PerturbationSpec(LARGE, 1), 0)
    moved = apply_perturbation(cam, Pose(d.rotation, np.zeros(3)))
    np.testing.assert_allclose(moved.pose.center, cam.pose.center, atol=1e-12)
    rel = moved.pose.rotation @ cam.pose.rotation.T
    assert rotation_angle(rel) == pytest.approx(rotation_angle(d.rotation), abs=1e-9)


def test_retarget_projects_target_to_principal_point(rig):
    target = np.array([0.02, -0.01, 0.0])
    for k in range(100):
        cam = perturb_camera(rig["agent"], PerturbationSpec(LARGE, 2, retarget=True), k, target)
        uv = project(cam.pose.apply(target), cam.intrinsics)
        assert np.hypot(uv[0] - cam.intrinsics.cx, uv[1] - cam.intrinsics.cy) <= 1.0


def test_retarget_onto_centre_fails(rig):
    cam = rig["agent"]
    with pytest.raises(GeometryError):
        apply_perturbation(cam, Pose.identity(), retarget=True, target=cam.pose.center)
