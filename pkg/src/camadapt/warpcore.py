"""Geometric view re-synthesis: plane-induced homography and depth splatting.

Images are (H, W, 3) uint8 arrays, depth maps (H, W) float arrays in meters
(invalid where non-finite or <= 0) and validity masks (H, W) bool arrays
with True marking observed pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .camgeom import CameraModel, GeometryError, Intrinsics, Plane, relative_pose


class DegeneratePlaneError(GeometryError):
    pass


class DimensionMismatchError(ValueError):
    pass


class Warped(NamedTuple):
    image: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class SplatParams:
    radius: int = 1
    z_eps: float = 1e-4

    def __post_init__(self):
        if self.radius not in (1, 2, 3):
            raise ValueError("splat radius must be 1, 2 or 3")
        if not self.z_eps > 0:
            raise ValueError("z_eps must be positive")


def normalize_homography(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise ValueError("homography must be 3x3")
    if abs(np.linalg.det(h)) < 1e-300:
        raise GeometryError("homography is singular")
    return h / h[2, 2] if h[2, 2] != 0 else h.copy()


def plane_homography(src: CameraModel, dst: CameraModel, plane: Plane) -> np.ndarray:
    """Homography taking src pixels of points on ``plane`` to dst pixels."""
    for cam in (src, dst):
        if abs(plane.signed_distance(cam.pose.center)) <= 1e-9:
            raise DegeneratePlaneError(f"plane passes through the centre of camera {cam.id!r}")
    rel = relative_pose(src.pose, dst.pose)
    R_s, t_s = src.pose.rotation, src.pose.translation
    n_s = R_s @ plane.normal
    d_s = plane.offset + n_s @ t_s
    # n_s . X = d_s on the plane, so X_dst = (R + t n_s^T / d_s) X_src there.
    H = dst.intrinsics.K @ (rel.rotation + np.outer(rel.translation, n_s) / d_s) @ src.intrinsics.K_inv
    return normalize_homography(H)


def apply_homography(h: np.ndarray, uv: np.ndarray) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    p = np.c_[uv, np.ones(len(uv))] @ np.asarray(h).T
    return p[:, :2] / p[:, 2:3]


@njit(cache=True)
def _warp(img, h_inv, oh, ow):
    sh, sw = img.shape[0], img.shape[1]
    out = np.zeros((oh, ow, 3), dtype=np.uint8)
    mask = np.zeros((oh, ow), dtype=np.bool_)
    one = np.float32(1.0)
    for v in range(oh):
        for u in range(ow):
            x = h_inv[0, 0] * u + h_inv[0, 1] * v + h_inv[0, 2]
            y = h_inv[1, 0] * u + h_inv[1, 1] * v + h_inv[1, 2]
            w = h_inv[2, 0] * u + h_inv[2, 1] * v + h_inv[2, 2]
            if not w > 0:
                continue
            xs = x / w
            ys = y / w
            if not (xs >= -0.5 and xs < sw - 0.5 and ys >= -0.5 and ys < sh - 0.5):
                continue
            mask[v, u] = True
            xf = np.floor(xs)
            yf = np.floor(ys)
            fx = np.float32(xs - xf)
            fy = np.float32(ys - yf)
            x0 = min(max(int(xf), 0), sw - 1)
            y0 = min(max(int(yf), 0), sh - 1)
            x1 = min(max(int(xf) + 1, 0), sw - 1)
            y1 = min(max(int(yf) + 1, 0), sh - 1)
            for c in range(3):
                top = np.float32(img[y0, x0, c]) * (one - fx) + np.float32(img[y0, x1, c]) * fx
                bot = np.float32(img[y1, x0, c]) * (one - fx) + np.float32(img[y1, x1, c]) * fx
                val = np.rint(top * (one - fy) + bot * fy)
                out[v, u, c] = np.uint8(min(max(val, np.float32(0.0)), np.float32(255.0)))
    return out, mask


def warp_homography(img: np.ndarray, h: np.ndarray, out_shape: tuple[int, int] | None = None) -> Warped:
    """Inverse-warp ``img`` by ``h`` (src -> dst) with bilinear sampling.

    A dst pixel is valid when its pre-image has positive homogeneous weight
    and falls inside the source pixel footprint ``[-0.5, W - 0.5) x
    [-0.5, H - 0.5)``; invalid pixels are black.
    """
    img = np.asarray(img)
    sh, sw = img.shape[:2]
    oh, ow = out_shape if out_shape is not None else (sh, sw)
    h_inv = np.linalg.inv(normalize_homography(h))
    out, mask = _warp(np.ascontiguousarray(img, dtype=np.uint8), h_inv, oh, ow)
    return Warped(out, mask)


def valid_depth(depth: np.ndarray) -> np.ndarray:
    d = np.asarray(depth)
    with np.errstate(invalid="ignore"):
        return np.isfinite(d) & (d > 0)


def _splat_offsets(radius: int) -> np.ndarray:
    # Odd footprints centre on the nearest pixel, even ones on floor(u).
    if radius % 2:
        r = radius // 2
        return np.arange(-r, r + 1)
    return np.arange(-(radius // 2 - 1), radius // 2 + 1)


@njit(cache=True)
def _project(img, depth, src_k, R, t, dst_k, shift, ow, oh):
    # Valid pixels in row-major order (the global source-index order), lifted
    # into the src frame and projected into dst. Points behind dst and points
    # far off-screen are dropped.
    h, w = depth.shape
    iu = np.empty(h * w, dtype=np.int64)
    iv = np.empty(h * w, dtype=np.int64)
    zs = np.empty(h * w)
    col = np.empty((h * w, 3), dtype=np.uint8)
    fx, fy, cx, cy = src_k[0], src_k[1], src_k[2], src_k[3]
    gx, gy, gcx, gcy = dst_k[0], dst_k[1], dst_k[2], dst_k[3]
    n = 0
    for v in range(h):
        for u in range(w):
            d = depth[v, u]
            if not (np.isfinite(d) and d > 0):
                continue
            x = (u - cx) / fx * d
            y = (v - cy) / fy * d
            X = R[0, 0] * x + R[0, 1] * y + R[0, 2] * d + t[0]
            Y = R[1, 0] * x + R[1, 1] * y + R[1, 2] * d + t[1]
            Z = R[2, 0] * x + R[2, 1] * y + R[2, 2] * d + t[2]
            if Z <= 1e-6:
                continue
            pu = np.floor(gx * X / Z + gcx + shift)
            pv = np.floor(gy * Y / Z + gcy + shift)
            if pu <= -8 or pu >= ow + 8 or pv <= -8 or pv >= oh + 8:
                continue
            iu[n] = np.int64(pu)
            iv[n] = np.int64(pv)
            zs[n] = Z
            col[n, 0] = img[v, u, 0]
            col[n, 1] = img[v, u, 1]
            col[n, 2] = img[v, u, 2]
            n += 1
    return iu[:n], iv[:n], zs[:n], col[:n]


@njit(cache=True)
def _zbuffer(iu, iv, z, col, offsets, oh, ow, z_eps):
    # Pass 1: nearest depth per dst pixel. Pass 2: walking candidates in
    # source order, the first one within z_eps of that depth wins.
    zmin = np.full(oh * ow, np.inf)
    for n in range(z.size):
        for dv in offsets:
            y = iv[n] + dv
            if y < 0 or y >= oh:
                continue
            for du in offsets:
                x = iu[n] + du
                if 0 <= x < ow and z[n] < zmin[y * ow + x]:
                    zmin[y * ow + x] = z[n]
    out = np.zeros((oh, ow, 3), dtype=np.uint8)
    mask = np.zeros((oh, ow), dtype=np.bool_)
    zbuf = np.full((oh, ow), np.nan, dtype=np.float32)
    for n in range(z.size):
        for dv in offsets:
            y = iv[n] + dv
            if y < 0 or y >= oh:
                continue
            for du in offsets:
                x = iu[n] + du
                if 0 <= x < ow and not mask[y, x] and z[n] <= zmin[y * ow + x] + z_eps:
                    mask[y, x] = True
                    out[y, x, 0] = col[n, 0]
                    out[y, x, 1] = col[n, 1]
                    out[y, x, 2] = col[n, 2]
                    zbuf[y, x] = z[n]
    return out, mask, zbuf


def reproject_depth(
    img: np.ndarray,
    depth: np.ndarray,
    src: CameraModel,
    dst: CameraModel,
    splat: SplatParams = SplatParams(),
) -> Warped:
    """Forward-splat one RGB-D view into ``dst``; see :func:`reproject_views`."""
    return reproject_views([(img, depth, src)], dst, splat)


def reproject_views(
    views: Sequence[tuple[np.ndarray, np.ndarray, CameraModel]],
    dst: CameraModel,
    splat: SplatParams = SplatParams(),
    return_depth: bool = False,
):
    """Union of several RGB-D views, forward-splatted into ``dst``.

    Every valid-depth source pixel is lifted to the world, projected into
    ``dst`` and written over a ``splat.radius``-square footprint. Each dst
    pixel keeps the nearest candidate; candidates within ``splat.z_eps`` of
    the nearest are resolved in favour of the lowest global source index
    (views in order, pixels row-major), which makes the result independent
    of processing order.
    """
    kd: Intrinsics = dst.intrinsics
    oh, ow = kd.height, kd.width
    offsets = _splat_offsets(splat.radius)
    shift = 0.5 if splat.radius % 2 else 0.0
    iu_all, iv_all, z_all, c_all = [], [], [], []
    for img, depth, cam in views:
        k = cam.intrinsics
        img = np.asarray(img)
        depth = np.asarray(depth)
        if img.shape != (k.height, k.width, 3) or depth.shape != (k.height, k.width):
            raise DimensionMismatchError(
                f"view {cam.id!r}: image {img.shape} / depth {depth.shape} do not match {k.width}x{k.height}"
            )
        rel = relative_pose(cam.pose, dst.pose)
        src_k = np.array([k.fx, k.fy, k.cx, k.cy])
        dst_k = np.array([kd.fx, kd.fy, kd.cx, kd.cy])
        iu, iv, z, c = _project(
            np.ascontiguousarray(img, dtype=np.uint8), np.ascontiguousarray(depth, dtype=np.float64),
            src_k, rel.rotation, rel.translation, dst_k, shift, ow, oh,
        )
        iu_all.append(iu)
        iv_all.append(iv)
        z_all.append(z)
        c_all.append(c)
    if views:
        out, mask, zbuf = _zbuffer(
            np.concatenate(iu_all), np.concatenate(iv_all), np.concatenate(z_all), np.concatenate(c_all),
            offsets.astype(np.int64), oh, ow, float(splat.z_eps),
        )
    else:
        out = np.zeros((oh, ow, 3), dtype=np.uint8)
        mask = np.zeros((oh, ow), dtype=bool)
        zbuf = np.full((oh, ow), np.nan, dtype=np.float32)
    if return_depth:
        return Warped(out, mask), zbuf
    return Warped(out, mask)
