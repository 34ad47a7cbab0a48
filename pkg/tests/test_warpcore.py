import numpy as np
import pytest
from scipy.ndimage import binary_erosion, maximum_filter, minimum_filter

from camadapt.benchkit.metrics import psnr
from camadapt.camgeom import CameraModel, Intrinsics, Plane, Pose, look_at, rotation_about, unproject_points
from camadapt.perturb import LARGE, PerturbationSpec, perturb_camera
from camadapt.scenesim import SceneDescription, Sphere, Table, render, sample_scene
from camadapt.warpcore import (
    DegeneratePlaneError,
    DimensionMismatchError,
    SplatParams,
    apply_homography,
    plane_homography,
    reproject_depth,
    reproject_views,
    warp_homography,
)
from oracles import plane_point_pixels, splat_reference, warp_reference

K200 = Intrinsics(200.0, 200.0, 63.5, 47.5, 128, 96)


def cam(cid, pose, k=K200):
    return CameraModel(cid, k, pose)


def test_homography_same_camera_is_identity():
    c = cam("a", look_at([0.1, -0.2, 0.6], [0, 0, 0]))
    np.testing.assert_allclose(plane_homography(c, c, Plane.horizontal()), np.eye(3), atol=1e-12)


def test_pure_rotation_is_plane_independent():
    c = cam("a", look_at([0.1, -0.2, 0.6], [0, 0, 0]))
    R = rotation_about([0.3, 1.0, 0.2], 0.4)
    d = cam("b", Pose(R @ c.pose.rotation, R @ c.pose.translation))
    expect = K200.K @ R @ K200.K_inv
    expect /= expect[2, 2]
    for pl in (Plane.horizontal(0.0), Plane.horizontal(-0.3), Plane(np.array([0.6, 0.0, 0.8]), 0.1)):
        np.testing.assert_allclose(plane_homography(c, d, pl), expect, atol=1e-12)


def test_parallel_shift_matches_dual_projection():
    # 0.5 m above the plane, second camera shifted 0.1 m parallel to it.
    c = cam("a", Pose(np.diag([1.0, -1.0, -1.0]), [0.0, 0.0, 0.5]))
    d = cam("b", Pose(c.pose.rotation, c.pose.translation - c.pose.rotation @ [0.1, 0.0, 0.0]))
    pl = Plane.horizontal(0.0)
    H = plane_homography(c, d, pl)
    rng = np.random.default_rng(0)
    uv = np.c_[rng.uniform(0, 127, 10), rng.uniform(0, 95, 10)]
    expect = plane_point_pixels(c, d, pl.normal, pl.offset, uv)
    assert np.max(np.abs(apply_homography(H, uv) - expect)) <= 1e-6


def test_random_plane_points_match_dual_projection():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        pl = Plane(n, rng.uniform(-0.2, 0.2))
        a = cam("a", look_at(rng.uniform(-1, 1, 3) + 2 * n, [0, 0, 0]))
        b = cam("b", look_at(rng.uniform(-1, 1, 3) + 2 * n, [0, 0, 0]))
        if min(abs(pl.signed_distance(x.pose.center)) for x in (a, b)) < 0.05:
            continue
        uv = np.c_[rng.uniform(0, 127, 10), rng.uniform(0, 95, 10)]
        expect = plane_point_pixels(a, b, pl.normal, pl.offset, uv)
        worst = max(worst, np.max(np.abs(apply_homography(plane_homography(a, b, pl), uv) - expect)))
    assert worst <= 1e-6


def test_homographies_compose():
    rng = np.random.default_rng(2)
    pl = Plane.horizontal(0.0)
    a, b, c = (cam(x, look_at(rng.uniform(-0.3, 0.3, 3) + [0, 0, 0.7], [0, 0, 0])) for x in "abc")
    Hab, Hbc, Hac = (plane_homography(*p, pl) for p in ((a, b), (b, c), (a, c)))
    prod = Hbc @ Hab
    np.testing.assert_allclose(prod / prod[2, 2], Hac, atol=1e-9)


def test_plane_through_camera_is_degenerate():
    c = cam("a", look_at([0.0, 0.0, 0.5], [0.1, 0, 0]))
    with pytest.raises(DegeneratePlaneError):
        plane_homography(c, c, Plane.horizontal(0.5))


def test_identity_warp_is_exact():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
    out, mask = warp_homography(img, np.eye(3))
    np.testing.assert_array_equal(out, img)
    assert mask.all()


def test_integer_shift_warp():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, (20, 30, 3), dtype=np.uint8)
    H = np.array([[1.0, 0.0, -10.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    out, mask = warp_homography(img, H)
    np.testing.assert_array_equal(out[:, :20], img[:, 10:])
    assert mask[:, :20].all() and not mask[:, 20:].any()
    assert (out[:, 20:] == 0).all()


def test_warp_matches_reference():
    rng = np.random.default_rng(5)
    for _ in range(100):
        img = rng.integers(0, 256, (int(rng.integers(5, 40)), int(rng.integers(5, 40)), 3), dtype=np.uint8)
        H = np.eye(3) + rng.normal(0, 0.1, (3, 3)) * [[1, 1, 10], [1, 1, 10], [0.01, 0.01, 1]]
        shape = (int(rng.integers(5, 40)), int(rng.integers(5, 40)))
        a, am = warp_homography(img, H, shape)
        b, bm = warp_reference(img, H, shape)
        np.testing.assert_array_equal(am, bm)
        np.testing.assert_array_equal(a, b)


def test_planar_scene_warp_matches_render(rig):
    scene = SceneDescription(table=Table(Plane.horizontal(0.0), cell=0.08))
    src = rig["agent"]
    errs = []
    for k in range(5):
        dst = perturb_camera(src, PerturbationSpec(LARGE, 0), k)
        truth = render(scene, dst).image
        out, mask = warp_homography(render(scene, src).image, plane_homography(src, dst, Plane.horizontal()))
        # interior: away from the mask border and from checker edges in the target
        flat = (maximum_filter(truth, size=(5, 5, 1)) == minimum_filter(truth, size=(5, 5, 1))).all(axis=2)
        inner = binary_erosion(mask, iterations=2) & flat
        assert inner.sum() > 1000
        errs.append(np.abs(out.astype(int) - truth)[inner].max())
    assert max(errs) <= 2


def test_splat_onto_itself_is_exact():
    scene = sample_scene(3)
    c = cam("a", look_at([0.1, -0.3, 0.5], [0, 0, 0]))
    r = render(scene, c)
    out, mask = reproject_depth(r.image, r.depth, c, c, SplatParams(1))
    valid = np.isfinite(r.depth)
    np.testing.assert_array_equal(mask, valid)
    np.testing.assert_array_equal(out[valid], r.image[valid])


def test_zbuffer_keeps_the_nearest():
    k = Intrinsics(10.0, 10.0, 1.0, 1.0, 3, 3)
    src = cam("s", Pose.identity(), k)
    img = np.zeros((3, 3, 3), np.uint8)
    img[1, 1] = (255, 0, 0)
    img[1, 2] = (0, 255, 0)
    depth = np.full((3, 3), np.nan)
    depth[1, 1] = 2.0
    depth[1, 2] = 1.0
    # Pixel (1, 1) lifts to (0, 0, 2) and pixel (1, 2) to (0.1, 0, 1). Put dst on
    # the line through both, so they land on its centre pixel at depths 1.0 and 2.0.
    X_far, X_near = np.array([0.0, 0.0, 2.0]), np.array([0.1, 0.0, 1.0])
    C = X_near + (X_near - X_far) * 0.5
    dst = cam("d", look_at(C, X_far, down=(0, 1, 0)), k)
    out, mask = reproject_depth(img, depth, src, dst)
    assert mask[1, 1]
    assert tuple(out[1, 1]) == (0, 255, 0)


def world_cloud(views):
    pts, cols = [], []
    for img, depth, c in views:
        v, u = np.nonzero(np.isfinite(depth) & (depth > 0))
        Xc = unproject_points(u, v, depth[v, u].astype(np.float64), c.intrinsics)
        pts.append((Xc - c.pose.translation) @ c.pose.rotation)
        cols.append(img[v, u])
    return np.concatenate(pts), np.concatenate(cols)


@pytest.mark.parametrize("radius", [1, 2, 3])
def test_splat_matches_brute_force_zbuffer(radius):
    k = Intrinsics.from_fov(48, 40, 55.0)
    scene = sample_scene(11)
    views = []
    for i, eye in enumerate(([0.2, -0.3, 0.45], [-0.25, -0.2, 0.5])):
        c = cam(f"v{i}", look_at(eye, [0, 0, 0]), k)
        r = render(scene, c)
        views.append((r.image, r.depth, c))
    dst = cam("d", look_at([0.05, -0.35, 0.4], [0, 0, 0.02]), Intrinsics.from_fov(44, 36, 60.0))
    out, mask = reproject_views(views, dst, SplatParams(radius, 1e-4))
    P, C = world_cloud(views)
    kd = dst.intrinsics
    ref, ref_mask = splat_reference(P, C, (kd.fx, kd.fy, kd.cx, kd.cy), dst.pose.rotation, dst.pose.translation,
                                    kd.shape, radius, 1e-4)
    np.testing.assert_array_equal(mask, ref_mask)
    np.testing.assert_array_equal(out, ref)


def test_splat_is_order_independent_within_eps():
    # Two views that see the same surface: swapping them changes only ties.
    scene = sample_scene(2)
    k = Intrinsics.from_fov(64, 64, 50.0)
    a = cam("a", look_at([0.0, -0.2, 0.5], [0, 0, 0]), k)
    r = render(scene, a)
    out1, m1 = reproject_views([(r.image, r.depth, a), (r.image, r.depth, a)], a)
    out2, m2 = reproject_depth(r.image, r.depth, a, a)
    np.testing.assert_array_equal(out1, out2)
    np.testing.assert_array_equal(m1, m2)


def test_sphere_scene_depth_reprojection_quality(rig):
    scene = SceneDescription(
        table=Table(Plane.horizontal(0.0)), objects=(Sphere((0.02, 0.01, 0.04), 0.04, (220, 40, 40)),)
    )
    src = rig["agent"]
    r = render(scene, src)
    for k in range(5):
        dst = perturb_camera(src, PerturbationSpec(LARGE, 1), k)
        out, mask = reproject_depth(r.image, r.depth, src, dst)
        assert psnr(out, render(scene, dst).image, mask) >= 30.0


def test_reproject_dimension_mismatch():
    c = cam("a", Pose.identity())
    with pytest.raises(DimensionMismatchError):
        reproject_depth(np.zeros((5, 5, 3), np.uint8), np.ones((5, 5)), c, c)
    with pytest.raises(ValueError):
        SplatParams(4)


def test_reproject_depth_output_is_nearest_depth():
    scene = sample_scene(6)
    c = cam("a", look_at([0.1, -0.3, 0.5], [0, 0, 0]))
    r = render(scene, c)
    (_, mask), z = reproject_views([(r.image, r.depth, c)], c, return_depth=True)
    np.testing.assert_array_equal(z[mask], r.depth[mask])
