import math

import numpy as np
import pytest

from camadapt.camgeom import (
    CameraModel,
    CameraRig,
    GeometryError,
    Intrinsics,
    Plane,
    Pose,
    RigFormatError,
    compose,
    format_rig,
    inverse,
    load_rig,
    look_at,
    parse_rig,
    project,
    project_points,
    relative_pose,
    rotation_about,
    rotation_angle,
    save_rig,
    unproject,
    unproject_points,
)
from conftest import random_pose

K500 = Intrinsics(500.0, 500.0, 128.0, 96.0, 256, 192)


def rz(deg):
    return Pose(rotation_about([0, 0, 1], math.radians(deg)), np.zeros(3))


def test_compose_with_identity():
    rng = np.random.default_rng(0)
    p = random_pose(rng)
    assert compose(Pose.identity(), p).allclose(p, 0.0)
    assert compose(p, Pose.identity()).allclose(p, 1e-15)


def test_compose_with_inverse_is_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = random_pose(rng)
        assert compose(p, inverse(p)).allclose(Pose.identity(), 1e-9)


def test_rotations_about_one_axis_add():
    assert compose(rz(30), rz(60)).allclose(rz(90), 1e-12)


def test_inverse_examples():
    assert inverse(Pose.identity()).allclose(Pose.identity(), 0.0)
    inv = inverse(Pose(np.eye(3), [1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(inv.translation, [-1.0, -2.0, -3.0])
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = random_pose(rng)
        assert inverse(inverse(p)).allclose(p, 1e-12)


def test_pose_rejects_bad_rotation():
    with pytest.raises(GeometryError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(GeometryError):
        Pose(np.eye(3) * 1.01, np.zeros(3))
    with pytest.raises(GeometryError):
        Pose(np.eye(3), [0.0, np.nan, 0.0])


def test_pose_is_immutable():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.rotation[0, 0] = 2.0


def test_project_examples():
    assert project([0.0, 0.0, 3.0], K500) == (128.0, 96.0)
    assert project([0.0, 0.0, -1.0], K500) is None
    u, v = project([0.1, 0.0, 2.0], K500)
    assert u == pytest.approx(153.0, abs=1e-12)
    assert v == 96.0


def test_unproject_examples():
    np.testing.assert_allclose(unproject(128.0, 96.0, 2.5, K500), [0.0, 0.0, 2.5])
    np.testing.assert_allclose(unproject(153.0, 96.0, 2.0, K500), [0.1, 0.0, 2.0], atol=1e-15)
    with pytest.raises(GeometryError):
        unproject(1.0, 1.0, 0.0, K500)
    with pytest.raises(GeometryError):
        unproject(1.0, 1.0, float("nan"), K500)


def test_project_points_marks_points_behind():
    uv, ok = project_points(np.array([[0, 0, 1.0], [0, 0, -1.0], [0.1, 0, 2.0]]), K500)
    np.testing.assert_array_equal(ok, [True, False, True])
    assert np.isnan(uv[1]).all()
    assert uv[2, 0] == pytest.approx(153.0)


def test_project_unproject_round_trip_vectorised():
    rng = np.random.default_rng(3)
    u = rng.uniform(-50, 300, 10_000)
    v = rng.uniform(-50, 250, 10_000)
    d = rng.uniform(0.01, 50, 10_000)
    uv, ok = project_points(unproject_points(u, v, d, K500), K500)
    assert ok.all()
    assert np.max(np.abs(uv - np.c_[u, v])) <= 1e-6


def test_relative_pose_examples():
    rng = np.random.default_rng(4)
    p, d = random_pose(rng), random_pose(rng)
    assert relative_pose(p, p).allclose(Pose.identity(), 1e-12)
    assert relative_pose(Pose.identity(), d).allclose(d, 1e-15)
    X = rng.normal(size=(20, 3))
    np.testing.assert_allclose(relative_pose(p, d).apply(p.apply(X)), d.apply(X), atol=1e-12)


def test_rotation_angle():
    assert rotation_angle(rotation_about([1, 2, 3], 0.7)) == pytest.approx(0.7, abs=1e-12)
    assert rotation_angle(np.eye(3)) == 0.0


def test_look_at_points_axis_at_target():
    p = look_at([0.3, -0.2, 0.5], [0.0, 0.1, 0.0])
    k = Intrinsics.from_fov(64, 64, 60.0)
    u, v = project(p.apply(np.array([0.0, 0.1, 0.0])), k)
    assert (u, v) == pytest.approx((k.cx, k.cy), abs=1e-9)
    # image +y follows world -z
    down = p.rotation @ np.array([0.0, 0.0, -1.0])
    assert down[1] > 0 and abs(down[0]) < 1e-12


def test_look_at_degenerate():
    with pytest.raises(GeometryError):
        look_at([0, 0, 1], [0, 0, 1])
    with pytest.raises(GeometryError):
        look_at([0, 0, 1], [0, 0, 0])


def test_intrinsics_validation():
    with pytest.raises(GeometryError):
        Intrinsics(0.0, 1.0, 0.0, 0.0, 4, 4)
    with pytest.raises(GeometryError):
        Intrinsics(1.0, 1.0, 5.0, 0.0, 4, 4)
    k = Intrinsics.from_fov(256, 256, 90.0)
    assert k.fx == pytest.approx(128.0)
    np.testing.assert_allclose(k.K @ k.K_inv, np.eye(3), atol=1e-15)


def test_plane_validation_and_distance():
    with pytest.raises(GeometryError):
        Plane(np.array([0.0, 0.0, 2.0]), 0.0)
    pl = Plane.horizontal(0.1)
    assert pl.signed_distance([0.0, 0.0, 0.5]) == pytest.approx(0.4)


def test_rig_ids_and_replace():
    cam = CameraModel("a", K500, Pose.identity())
    rig = CameraRig((cam, CameraModel("b", K500, Pose.identity())))
    assert rig.ids == ["a", "b"] and "a" in rig and len(rig) == 2
    moved = cam.with_pose(Pose(np.eye(3), [1.0, 0, 0]))
    assert rig.replace(moved)["a"] is moved
    with pytest.raises(KeyError):
        rig.replace(CameraModel("z", K500, Pose.identity()))
    with pytest.raises(GeometryError):
        CameraRig((cam, cam))
    with pytest.raises(GeometryError):
        CameraRig(())


def test_rig_file_round_trip_is_exact(tmp_path, rig):
    rng = np.random.default_rng(5)
    cams = list(rig) + [CameraModel("odd one", K500, random_pose(rng))]
    path = tmp_path / "rig.txt"
    save_rig(cams, path)
    back = load_rig(path)
    assert back.ids == [c.id for c in cams]
    for a, b in zip(cams, back):
        assert a.intrinsics == b.intrinsics
        assert a.pose == b.pose
    assert format_rig(back) == path.read_text()


@pytest.mark.parametrize(
    "text, needle",
    [
        ("fx = 1\n", "outside"),
        ("[camera]\nid = a\nbogus = 1\n", "unknown"),
        ("[camera]\nid = a\nfx = 1\n", "missing"),
        (format_rig([CameraModel("a", K500, Pose.identity())]).replace("translation = 0 0 0", "translation = 0 0"), "3"),
        (format_rig([CameraModel("a", K500, Pose.identity())]).replace("fx = 500", "fx = -5"), "focal"),
    ],
)
def test_rig_parse_errors(text, needle):
    with pytest.raises(RigFormatError, match=needle):
        parse_rig(text)
