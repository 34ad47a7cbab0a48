"""Pinhole cameras, rigid world-to-camera poses and rig files.

Conventions used everywhere in the package:

* A :class:`Pose` maps world points into the camera frame,
  ``X_cam = R @ X_world + t``.
* Camera axes: +x right, +y down, +z forward along the optical axis.
* Pixel ``(i, j)`` is centred on integer coordinates, so column ``u = i``
  covers ``[i - 0.5, i + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

Z_MIN = 1e-6
ORTHO_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input (bad depth, degenerate look-at, ...)."""


class RigFormatError(ValueError):
    pass


def _frozen(a, shape, name):
    arr = np.array(a, dtype=np.float64)
    if arr.shape != shape:
        raise GeometryError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise GeometryError("sensor size must be at least 1x1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the sensor")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def shape(self) -> tuple[int, int]:
        """Image array shape ``(height, width)``."""
        return (self.height, self.width)

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float) -> "Intrinsics":
        fx = (width / 2.0) / math.tan(math.radians(fov_x_deg) / 2.0)
        return cls(fx, fx, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation, (3, 3), "rotation")
        t = _frozen(self.translation, (3,), "translation")
        with np.errstate(over="ignore", invalid="ignore"):
            off = np.linalg.norm(R.T @ R - np.eye(3))
        if not off <= ORTHO_TOL:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise GeometryError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self) -> np.ndarray:
        """Optical centre in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map world points of shape (..., 3) into this frame."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def compose(a: Pose, b: Pose) -> Pose:
    """Pose mapping ``X -> a(b(X))``."""
    R = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    if np.linalg.norm(R.T @ R - np.eye(3)) > ORTHO_TOL:
        R = _orthonormalize(R)
    return Pose(R, t)


def inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -Rt @ p.translation)


def relative_pose(src: Pose, dst: Pose) -> Pose:
    """Transform taking src-camera coordinates to dst-camera coordinates."""
    return compose(dst, inverse(src))


def rotation_about(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix for a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0 or angle_rad == 0.0:
        return np.eye(3)
    x, y, z = axis / n
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def look_at(center, target, down=(0.0, 0.0, -1.0)) -> Pose:
    """World-to-camera pose at ``center`` with the optical axis on ``target``.

    The image +y axis follows ``down`` projected onto the image plane.
    """
    center = np.asarray(center, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - center
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise GeometryError("look-at target coincides with the camera centre")
    z = fwd / n
    d = np.asarray(down, dtype=np.float64)
    y = d - (d @ z) * z
    ny = np.linalg.norm(y)
    if ny < 1e-9:
        raise GeometryError("look-at direction is parallel to the down vector")
    y /= ny
    x = np.cross(y, z)
    R_c2w = np.column_stack([x, y, z])
    R = R_c2w.T
    return Pose(R, -R @ center)


def project(point_cam, k: Intrinsics, z_min: float = Z_MIN) -> tuple[float, float] | None:
    """Project one camera-frame point; ``None`` when it is behind the camera."""
    x, y, z = (float(c) for c in point_cam)
    if not z > z_min:
        return None
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def project_points(points_cam: np.ndarray, k: Intrinsics, z_min: float = Z_MIN):
    """Vectorised :func:`project`.

    Returns ``(uv, ok)`` where ``uv`` has shape (N, 2) and rows with
    ``ok == False`` (behind the camera) are NaN.
    """
    P = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    z = P[:, 2]
    ok = z > z_min
    uv = np.full((P.shape[0], 2), np.nan)
    zi = z[ok]
    uv[ok, 0] = k.fx * P[ok, 0] / zi + k.cx
    uv[ok, 1] = k.fy * P[ok, 1] / zi + k.cy
    return uv, ok


def unproject(u: float, v: float, depth: float, k: Intrinsics) -> np.ndarray:
    if not (math.isfinite(depth) and depth > 0):
        raise GeometryError(f"invalid depth {depth!r}")
    return np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0]) * depth


def unproject_points(u, v, depth, k: Intrinsics) -> np.ndarray:
    """Vectorised :func:`unproject`; caller guarantees valid depths."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    return np.stack([(u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d], axis=-1)


@dataclass(frozen=True)
class Plane:
    """Plane ``{X : normal . X = offset}`` in world coordinates."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = _frozen(self.normal, (3,), "normal")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise GeometryError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def horizontal(cls, height: float = 0.0) -> "Plane":
        return cls(np.array([0.0, 0.0, 1.0]), height)

    def signed_distance(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.normal - self.offset

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return np.array_equal(self.normal, other.normal) and self.offset == other.offset

    def __hash__(self):
        return hash((self.normal.tobytes(), self.offset))


@dataclass(frozen=True)
class CameraModel:
    id: str
    intrinsics: Intrinsics
    pose: Pose

    def with_pose(self, pose: Pose) -> "CameraModel":
        return CameraModel(self.id, self.intrinsics, pose)


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple[CameraModel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        cams = tuple(self.cameras)
        if not cams:
            raise GeometryError("camera rig must not be empty")
        ids = [c.id for c in cams]
        if len(set(ids)) != len(ids):
            raise GeometryError(f"duplicate camera ids in rig: {ids}")
        object.__setattr__(self, "cameras", cams)

    def __iter__(self) -> Iterator[CameraModel]:
        return iter(self.cameras)

    def __len__(self) -> int:
        return len(self.cameras)

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.cameras]

    def __getitem__(self, cam_id: str) -> CameraModel:
        for c in self.cameras:
            if c.id == cam_id:
                return c
        raise KeyError(cam_id)

    def __contains__(self, cam_id) -> bool:
        return any(c.id == cam_id for c in self.cameras)

    def replace(self, cam: CameraModel) -> "CameraRig":
        if cam.id not in self:
            raise KeyError(cam.id)
        return CameraRig(tuple(cam if c.id == cam.id else c for c in self.cameras))


# --- rig files -------------------------------------------------------------
#
#   # comment
#   [camera]
#   id = agent
#   fx = ...  fy = ...  cx = ...  cy = ...  width = ...  height = ...
#   rotation = r00 r01 r02 r10 r11 r12 r20 r21 r22
#   translation = t0 t1 t2
#
# Floats are written with 17 significant digits so a round trip is bit exact.

_RIG_KEYS = ("id", "fx", "fy", "cx", "cy", "width", "height", "rotation", "translation")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_rig(rig: CameraRig | Iterable[CameraModel]) -> str:
    lines = ["# camadapt camera rig v1"]
    for cam in rig:
        k, p = cam.intrinsics, cam.pose
        lines += [
            "",
            "[camera]",
            f"id = {cam.id}",
            f"fx = {_fmt(k.fx)}",
            f"fy = {_fmt(k.fy)}",
            f"cx = {_fmt(k.cx)}",
            f"cy = {_fmt(k.cy)}",
            f"width = {k.width}",
            f"height = {k.height}",
            "rotation = " + " ".join(_fmt(x) for x in p.rotation.ravel()),
            "translation = " + " ".join(_fmt(x) for x in p.translation),
        ]
    return "\n".join(lines) + "\n"


def _camera_from_fields(fields: dict, where: str) -> CameraModel:
    missing = [k for k in _RIG_KEYS if k not in fields]
    if missing:
        raise RigFormatError(f"{where}: missing keys {missing}")
    try:
        rot = [float(x) for x in fields["rotation"].split()]
        tr = [float(x) for x in fields["translation"].split()]
        if len(rot) != 9 or len(tr) != 3:
            raise RigFormatError(f"{where}: rotation needs 9 values, translation 3")
        k = Intrinsics(
            float(fields["fx"]),
            float(fields["fy"]),
            float(fields["cx"]),
            float(fields["cy"]),
            int(fields["width"]),
            int(fields["height"]),
        )
        pose = Pose(np.array(rot).reshape(3, 3), np.array(tr))
    except (GeometryError, ValueError) as exc:
        if isinstance(exc, RigFormatError):
            raise
        raise RigFormatError(f"{where}: {exc}") from exc
    return CameraModel(fields["id"], k, pose)


def parse_rig(text: str) -> CameraRig:
    cams: list[CameraModel] = []
    current: dict | None = None
    start = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[camera]":
            if current is not None:
                cams.append(_camera_from_fields(current, f"camera at line {start}"))
            current, start = {}, lineno
            continue
        if current is None:
            raise RigFormatError(f"line {lineno}: entry outside a [camera] section")
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _RIG_KEYS:
            raise RigFormatError(f"line {lineno}: unknown entry {line!r}")
        current[key] = value.strip()
    if current is not None:
        cams.append(_camera_from_fields(current, f"camera at line {start}"))
    try:
        return CameraRig(tuple(cams))
    except GeometryError as exc:
        raise RigFormatError(str(exc)) from exc


def save_rig(rig: CameraRig | Sequence[CameraModel], path) -> None:
    Path(path).write_text(format_rig(rig))


def load_rig(path) -> CameraRig:
    return parse_rig(Path(path).read_text())
