"""Deterministic ray-cast renderer for parametric tabletop scenes.

One ray per pixel centre, nearest hit among the table plane and the
primitives, view-independent Lambertian shading without shadows. Because
shading does not depend on the viewer, a world point seen from two cameras
gets exactly the same colour, which is what makes the renders usable as
ground truth for view synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

from .camgeom import CameraModel, CameraRig, GeometryError, Plane
from .rng import TAG_SCENE, CounterStream

RGB = tuple[int, int, int]

HIT_EPS = 1e-9


class SceneFormatError(ValueError):
    pass


def _rgb(c) -> RGB:
    t = tuple(int(x) for x in c)
    if len(t) != 3 or any(not 0 <= x <= 255 for x in t):
        raise GeometryError(f"invalid RGB colour {c!r}")
    return t


@dataclass(frozen=True)
class Table:
    plane: Plane
    cell: float = 0.05
    color_a: RGB = (195, 190, 180)
    color_b: RGB = (150, 150, 158)

    def __post_init__(self):
        if not self.cell > 0:
            raise GeometryError("checker cell size must be positive")
        object.__setattr__(self, "color_a", _rgb(self.color_a))
        object.__setattr__(self, "color_b", _rgb(self.color_b))


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    albedo: RGB

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "albedo", _rgb(self.albedo))
        if not self.radius > 0:
            raise GeometryError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    albedo: RGB

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(x) for x in self.lo))
        object.__setattr__(self, "hi", tuple(float(x) for x in self.hi))
        object.__setattr__(self, "albedo", _rgb(self.albedo))
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise GeometryError("box min must be below max componentwise")


Primitive = Union[Sphere, Box]


@dataclass(frozen=True)
class SceneDescription:
    table: Table | None = None
    objects: tuple[Primitive, ...] = ()
    light: tuple[float, float, float] = (0.3, -0.4, 0.866)
    ambient: float = 0.35
    background: RGB = (30, 30, 40)

    def __post_init__(self):
        light = np.asarray(self.light, dtype=np.float64)
        n = np.linalg.norm(light)
        if not n > 0:
            raise GeometryError("light direction must be non-zero")
        if abs(n - 1.0) > 1e-12:
            light = light / n
        object.__setattr__(self, "light", tuple(float(x) for x in light))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "background", _rgb(self.background))
        if not 0.0 <= self.ambient <= 1.0:
            raise GeometryError("ambient fraction must lie in [0, 1]")


class RenderOutput(NamedTuple):
    image: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32, NaN where nothing was hit


def _plane_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ n) * n
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def camera_rays(cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray origin and per-pixel directions (H, W, 3).

    Directions are scaled so their camera-frame z component is 1; the ray
    parameter of a hit is therefore its depth along the optical axis.
    """
    k = cam.intrinsics
    u = (np.arange(k.width, dtype=np.float64) - k.cx) / k.fx
    v = (np.arange(k.height, dtype=np.float64) - k.cy) / k.fy
    d_cam = np.empty((k.height, k.width, 3))
    d_cam[..., 0] = u[None, :]
    d_cam[..., 1] = v[:, None]
    d_cam[..., 2] = 1.0
    return cam.pose.center, d_cam @ cam.pose.rotation


def render(scene: SceneDescription, cam: CameraModel) -> RenderOutput:
    origin, d = camera_rays(cam)
    h, w, _ = d.shape
    t_best = np.full((h, w), np.inf)
    normal = np.zeros((h, w, 3))
    albedo = np.zeros((h, w, 3))

    if scene.table is not None:
        pl = scene.table.plane
        denom = d @ pl.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (pl.offset - pl.normal @ origin) / denom
        hit = (denom != 0) & (t > HIT_EPS) & (t < t_best)
        t_best[hit] = t[hit]
        X = origin + t[hit][:, None] * d[hit]
        e1, e2 = _plane_basis(pl.normal)
        cell = scene.table.cell
        parity = (np.floor(X @ e1 / cell) + np.floor(X @ e2 / cell)).astype(np.int64) & 1
        albedo[hit] = np.where(
            parity[:, None] == 0, np.array(scene.table.color_a, float), np.array(scene.table.color_b, float)
        )
        n_side = np.where((denom[hit] > 0)[:, None], -pl.normal, pl.normal)
        normal[hit] = n_side

    for obj in scene.objects:
        if isinstance(obj, Sphere):
            t, n = _hit_sphere(origin, d, obj)
        else:
            t, n = _hit_box(origin, d, obj)
        hit = t < t_best
        t_best[hit] = t[hit]
        normal[hit] = n[hit]
        albedo[hit] = np.array(obj.albedo, dtype=np.float64)

    hit_any = np.isfinite(t_best)
    light = np.array(scene.light)
    shade = scene.ambient + (1.0 - scene.ambient) * np.maximum(0.0, normal @ light)
    color = albedo * shade[..., None]
    image = np.empty((h, w, 3), dtype=np.uint8)
    image[hit_any] = np.clip(np.rint(color[hit_any]), 0, 255).astype(np.uint8)
    image[~hit_any] = np.array(scene.background, dtype=np.uint8)
    depth = np.where(hit_any, t_best, np.nan).astype(np.float32)
    return RenderOutput(image, depth)


def _hit_sphere(origin, d, s: Sphere):
    c = np.array(s.center)
    oc = origin - c
    a = np.einsum("hwk,hwk->hw", d, d)
    b = d @ oc
    cc = oc @ oc - s.radius * s.radius
    disc = b * b - a * cc
    t = np.full(a.shape, np.inf)
    ok = disc >= 0
    sq = np.sqrt(disc[ok])
    t0 = (-b[ok] - sq) / a[ok]
    t1 = (-b[ok] + sq) / a[ok]
    tt = np.where(t0 > HIT_EPS, t0, np.where(t1 > HIT_EPS, t1, np.inf))
    t[ok] = tt
    hit = np.isfinite(t)
    n = np.zeros(d.shape)
    n[hit] = (origin + t[hit][:, None] * d[hit] - c) / s.radius
    return t, n


def _hit_box(origin, d, b: Box):
    lo, hi = np.array(b.lo), np.array(b.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    tn = np.fmin(t1, t2)
    tf = np.fmax(t1, t2)
    t_enter = np.max(tn, axis=-1)
    t_exit = np.min(tf, axis=-1)
    axis = np.argmax(tn, axis=-1)
    hit = (t_exit >= t_enter) & (t_exit > HIT_EPS)
    t = np.where(hit, np.where(t_enter > HIT_EPS, t_enter, t_exit), np.inf)
    n = np.zeros(d.shape)
    idx = np.nonzero(hit)
    ax = axis[idx]
    n[idx + (ax,)] = -np.sign(d[idx + (ax,)])
    return t, n


def render_rig(scene: SceneDescription, rig: CameraRig | Sequence[CameraModel]) -> list[RenderOutput]:
    return [render(scene, cam) for cam in rig]


def surface_residual(scene: SceneDescription, X: np.ndarray) -> np.ndarray:
    """Distance of each world point (N, 3) to the nearest scene surface."""
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    res = np.full(X.shape[0], np.inf)
    if scene.table is not None:
        res = np.minimum(res, np.abs(scene.table.plane.signed_distance(X)))
    for obj in scene.objects:
        if isinstance(obj, Sphere):
            r = np.abs(np.linalg.norm(X - np.array(obj.center), axis=1) - obj.radius)
        else:
            lo, hi = np.array(obj.lo), np.array(obj.hi)
            q = np.maximum(lo - X, X - hi)
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
            inside = np.minimum(np.max(q, axis=1), 0.0)
            r = np.abs(outside + inside)
        res = np.minimum(res, r)
    return res


# --- scene sampling ----------------------------------------------------------

PALETTE: tuple[RGB, ...] = (
    (220, 40, 40),  # red, reserved for the goal sphere
    (40, 170, 70),
    (50, 90, 215),
    (225, 200, 45),
    (150, 70, 190),
    (40, 185, 195),
)
GOAL_COLOR: RGB = PALETTE[0]


@dataclass(frozen=True)
class SceneConfig:
    table_height: float = 0.0
    workspace_lo: tuple[float, float] = (-0.14, -0.14)
    workspace_hi: tuple[float, float] = (0.14, 0.14)
    workspace_top: float = 0.13
    goal_radius: float = 0.02
    max_objects: int = 4
    gap: float = 0.02
    sphere_radius: tuple[float, float] = (0.02, 0.045)
    box_half: tuple[float, float] = (0.015, 0.04)
    box_height: tuple[float, float] = (0.05, 0.12)


def _footprint(obj: Primitive) -> tuple[float, float, float]:
    if isinstance(obj, Sphere):
        return obj.center[0], obj.center[1], obj.radius
    cx = 0.5 * (obj.lo[0] + obj.hi[0])
    cy = 0.5 * (obj.lo[1] + obj.hi[1])
    return cx, cy, float(np.hypot(obj.hi[0] - cx, obj.hi[1] - cy))


def sample_scene(seed: int, config: SceneConfig = SceneConfig()) -> SceneDescription:
    """Random tabletop with a red goal sphere plus 0-3 distractors.

    Objects rest on the table, stay inside the workspace box and keep at
    least ``config.gap`` between their footprint circles.
    """
    rs = CounterStream(seed, TAG_SCENE)
    h = config.table_height
    (x0, y0), (x1, y1) = config.workspace_lo, config.workspace_hi
    n_objects = rs.integer(1, config.max_objects)
    colors = list(PALETTE[1:])
    objects: list[Primitive] = []
    for i in range(n_objects):
        for _ in range(100):
            if i == 0:
                r = config.goal_radius
                cand: Primitive = Sphere(
                    (rs.uniform(x0 + r, x1 - r), rs.uniform(y0 + r, y1 - r), h + r), r, GOAL_COLOR
                )
                color_idx = None
            else:
                color_idx = rs.choice_index(len(colors))
                if rs.uniform() < 0.5:
                    r = rs.uniform(*config.sphere_radius)
                    cand = Sphere(
                        (rs.uniform(x0 + r, x1 - r), rs.uniform(y0 + r, y1 - r), h + r), r, colors[color_idx]
                    )
                else:
                    hx, hy = rs.uniform(*config.box_half), rs.uniform(*config.box_half)
                    top = rs.uniform(*config.box_height)
                    cx, cy = rs.uniform(x0 + hx, x1 - hx), rs.uniform(y0 + hy, y1 - hy)
                    cand = Box((cx - hx, cy - hy, h), (cx + hx, cy + hy, h + top), colors[color_idx])
            ax, ay, ar = _footprint(cand)
            if all(np.hypot(ax - bx, ay - by) >= ar + br + config.gap for bx, by, br in map(_footprint, objects)):
                objects.append(cand)
                if color_idx is not None:
                    colors.pop(color_idx)
                break
    return SceneDescription(table=Table(Plane.horizontal(h)), objects=tuple(objects))


def goal_sphere(scene: SceneDescription, color: RGB = GOAL_COLOR) -> Sphere:
    for obj in scene.objects:
        if isinstance(obj, Sphere) and obj.albedo == tuple(color):
            return obj
    raise LookupError(f"scene has no sphere of colour {color}")


# --- scene files -------------------------------------------------------------
#
#   # camadapt scene v1
#   table = nx ny nz offset cell  Ra Ga Ba  Rb Gb Bb      (optional line)
#   light = lx ly lz
#   ambient = a
#   background = R G B
#   sphere = cx cy cz radius  R G B                      (repeatable)
#   box = x0 y0 z0 x1 y1 z1  R G B                        (repeatable)


def _f(x: float) -> str:
    return format(float(x), ".17g")


def format_scene(scene: SceneDescription) -> str:
    lines = ["# camadapt scene v1"]
    if scene.table is not None:
        t = scene.table
        vals = [*map(_f, t.plane.normal), _f(t.plane.offset), _f(t.cell), *map(str, t.color_a), *map(str, t.color_b)]
        lines.append("table = " + " ".join(vals))
    lines.append("light = " + " ".join(map(_f, scene.light)))
    lines.append(f"ambient = {_f(scene.ambient)}")
    lines.append("background = " + " ".join(map(str, scene.background)))
    for obj in scene.objects:
        if isinstance(obj, Sphere):
            vals = [*map(_f, obj.center), _f(obj.radius), *map(str, obj.albedo)]
            lines.append("sphere = " + " ".join(vals))
        else:
            vals = [*map(_f, obj.lo), *map(_f, obj.hi), *map(str, obj.albedo)]
            lines.append("box = " + " ".join(vals))
    return "\n".join(lines) + "\n"


def parse_scene(text: str) -> SceneDescription:
    kw: dict = {}
    objects: list[Primitive] = []
    arity = {"table": 11, "light": 3, "ambient": 1, "background": 3, "sphere": 7, "box": 9}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in arity:
            raise SceneFormatError(f"line {lineno}: unknown entry {line!r}")
        try:
            vals = [float(x) for x in value.split()]
        except ValueError as exc:
            raise SceneFormatError(f"line {lineno}: {exc}") from exc
        if len(vals) != arity[key]:
            raise SceneFormatError(f"line {lineno}: '{key}' expects {arity[key]} values, got {len(vals)}")
        try:
            if key == "table":
                kw["table"] = Table(Plane(np.array(vals[:3]), vals[3]), vals[4], vals[5:8], vals[8:11])
            elif key == "light":
                kw["light"] = tuple(vals)
            elif key == "ambient":
                kw["ambient"] = vals[0]
            elif key == "background":
                kw["background"] = vals
            elif key == "sphere":
                objects.append(Sphere(vals[:3], vals[3], vals[4:]))
            else:
                objects.append(Box(vals[:3], vals[3:6], vals[6:]))
        except GeometryError as exc:
            raise SceneFormatError(f"line {lineno}: {exc}") from exc
    try:
        return SceneDescription(objects=tuple(objects), **kw)
    except GeometryError as exc:
        raise SceneFormatError(str(exc)) from exc


def save_scene(scene: SceneDescription, path) -> None:
    Path(path).write_text(format_scene(scene))


def load_scene(path) -> SceneDescription:
    return parse_scene(Path(path).read_text())
