import numpy as np
import pytest

from camadapt.benchkit.metrics import psnr
from camadapt.camgeom import CameraModel, CameraRig, Intrinsics, Plane, Pose, look_at, unproject_points
from camadapt.scenesim import (
    Box,
    SceneConfig,
    SceneDescription,
    SceneFormatError,
    Sphere,
    Table,
    format_scene,
    goal_sphere,
    load_scene,
    parse_scene,
    render,
    render_rig,
    sample_scene,
    save_scene,
    surface_residual,
)


def world_points(out, cam, n=None, rng=None):
    """World points of valid pixels (all of them, or n random ones) and their (v, u)."""
    pick = np.argwhere(np.isfinite(out.depth))
    if n is not None:
        pick = pick[rng.choice(len(pick), size=min(n, len(pick)), replace=False)]
    v, u = pick[:, 0], pick[:, 1]
    Xc = unproject_points(u, v, out.depth[v, u].astype(np.float64), cam.intrinsics)
    return (Xc - cam.pose.translation) @ cam.pose.rotation, v, u


def test_sphere_depth_at_principal_point():
    cam = CameraModel("c", Intrinsics(100.0, 100.0, 32.0, 32.0, 65, 65), Pose.identity())
    scene = SceneDescription(objects=(Sphere((0.0, 0.0, 2.0), 0.5, (200, 10, 10)),))
    out = render(scene, cam)
    assert out.depth[32, 32] == pytest.approx(1.5, abs=1e-6)
    assert np.isnan(out.depth[0, 0])


def test_empty_scene_is_background():
    cam = CameraModel("c", Intrinsics.from_fov(16, 12, 60.0), Pose.identity())
    out = render(SceneDescription(), cam)
    assert (out.image == np.array([30, 30, 40], np.uint8)).all()
    assert np.isnan(out.depth).all()
    assert out.image.shape == (12, 16, 3) and out.depth.dtype == np.float32


def test_depth_lies_on_surfaces():
    rng = np.random.default_rng(0)
    for seed in range(10):
        scene = sample_scene(seed)
        cam = CameraModel("c", Intrinsics.from_fov(96, 96, 50.0), look_at(rng.uniform(-0.4, 0.4, 3) + [0, 0, 0.6], [0, 0, 0]))
        out = render(scene, cam)
        X, _, _ = world_points(out, cam, 100, rng)
        assert np.max(surface_residual(scene, X)) <= 1e-6


def test_shading_is_view_independent():
    # The flat top face of a box must get one colour in every view.
    scene = SceneDescription(objects=(Box((-0.05, -0.05, 0.0), (0.05, 0.05, 0.08), (50, 90, 215)),))
    k = Intrinsics.from_fov(64, 64, 50.0)
    seen = set()
    for eye in ([0.0, -0.3, 0.5], [0.25, 0.1, 0.4], [-0.1, 0.2, 0.6]):
        cam = CameraModel("c", k, look_at(eye, [0, 0, 0]))
        out = render(scene, cam)
        X, v, u = world_points(out, cam)
        on_top = np.abs(X[:, 2] - 0.08) < 1e-6
        assert on_top.sum() > 20
        seen |= {tuple(c) for c in out.image[v[on_top], u[on_top]]}
    assert len(seen) == 1


def test_render_rig_matches_render(rig):
    scene = sample_scene(1)
    outs = render_rig(scene, CameraRig((rig["agent"],)))
    assert len(outs) == 1
    np.testing.assert_array_equal(outs[0].image, render(scene, rig["agent"]).image)
    twin = CameraRig((rig["agent"], CameraModel("twin", rig["agent"].intrinsics, rig["agent"].pose)))
    a, b = render_rig(scene, twin)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_ring_views_differ():
    scene = SceneDescription(table=Table(Plane.horizontal(0.0)), objects=(Sphere((0, 0, 0.05), 0.05, (220, 40, 40)),))
    k = Intrinsics.from_fov(64, 64, 50.0)
    cams = []
    for i in range(8):
        a = 2 * np.pi * i / 8
        cams.append(CameraModel(f"r{i}", k, look_at([0.4 * np.cos(a), 0.4 * np.sin(a), 0.3], [0, 0, 0.05])))
    imgs = [render(scene, c).image for c in cams]
    same = psnr(imgs[0], render(scene, cams[0]).image)
    for i in range(8):
        assert psnr(imgs[i], imgs[(i + 1) % 8]) < same


def test_sample_scene_is_deterministic():
    assert sample_scene(0) == sample_scene(0)
    assert sample_scene(0) != sample_scene(1)


def test_sampled_scenes_respect_workspace():
    cfg = SceneConfig()
    counts = set()
    for seed in range(100):
        scene = sample_scene(seed, cfg)
        counts.add(len(scene.objects))
        assert 1 <= len(scene.objects) <= 4
        assert goal_sphere(scene).radius == cfg.goal_radius
        feet = []
        for obj in scene.objects:
            if isinstance(obj, Sphere):
                lo = np.array(obj.center) - obj.radius
                hi = np.array(obj.center) + obj.radius
                feet.append((obj.center[0], obj.center[1], obj.radius))
            else:
                lo, hi = np.array(obj.lo), np.array(obj.hi)
                c = (lo + hi) / 2
                feet.append((c[0], c[1], np.hypot(*(hi - c)[:2])))
            assert lo[0] >= cfg.workspace_lo[0] - 1e-12 and lo[1] >= cfg.workspace_lo[1] - 1e-12
            assert hi[0] <= cfg.workspace_hi[0] + 1e-12 and hi[1] <= cfg.workspace_hi[1] + 1e-12
            assert lo[2] >= cfg.table_height - 1e-12 and hi[2] <= cfg.table_height + cfg.workspace_top
        for i in range(len(feet)):
            for j in range(i):
                (ax, ay, ar), (bx, by, br) = feet[i], feet[j]
                assert np.hypot(ax - bx, ay - by) >= ar + br
        colors = [o.albedo for o in scene.objects]
        assert len(set(colors)) == len(colors)
    assert len(counts) >= 3


def test_table_height_is_honoured():
    scene = sample_scene(4, SceneConfig(table_height=0.3))
    assert scene.table.plane.offset == 0.3
    assert goal_sphere(scene).center[2] == pytest.approx(0.32)


def test_scene_file_round_trip(tmp_path):
    for seed in range(5):
        scene = sample_scene(seed)
        save_scene(scene, tmp_path / "s.txt")
        back = load_scene(tmp_path / "s.txt")
        assert back == scene
        assert format_scene(back) == (tmp_path / "s.txt").read_text()


@pytest.mark.parametrize(
    "text",
    ["sphere = 0 0 0 1 255 0\n", "teapot = 1\n", "sphere = 0 0 0 -1 255 0 0\n", "box = 0 0 0 0 1 1 1 1 1\n",
     "ambient = x\n", "light = 0 0 0\n"],
)
def test_scene_parse_errors(text):
    with pytest.raises(SceneFormatError):
        parse_scene(text)


def test_goal_lookup_fails_without_goal():
    with pytest.raises(LookupError):
        goal_sphere(SceneDescription())
