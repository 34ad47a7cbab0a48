"""Camera adaptation: re-synthesize test-time views at the training cameras."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..camgeom import CameraModel, CameraRig, Plane
from ..inpaint import InpaintParams, inpaint_telea
from ..nvslink import DEFAULT_TIMEOUT_MS, NvsClient, NvsRequest, RemoteError, SourceView, TargetCamera
from ..warpcore import SplatParams, plane_homography, reproject_views, valid_depth, warp_homography


class AdaptError(Exception):
    pass


class MissingDepthError(AdaptError):
    pass


class MissingPlaneError(AdaptError):
    pass


class IdMismatchError(AdaptError):
    pass


class RemoteFailure(AdaptError):
    def __init__(self, cause: RemoteError):
        super().__init__(f"remote synthesis failed: {cause}")
        self.cause = cause


@dataclass(frozen=True, eq=False)
class View:
    camera_id: str
    image: np.ndarray
    depth: np.ndarray | None = None
    mask: np.ndarray | None = None  # validity before hole filling, synthesized views only

    @property
    def fill_fraction(self) -> float:
        return 0.0 if self.mask is None else float(1.0 - np.mean(self.mask))


@dataclass(frozen=True, eq=False)
class FrameSet:
    t: int
    views: tuple[View, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        ids = [v.camera_id for v in self.views]
        if len(set(ids)) != len(ids):
            raise AdaptError(f"duplicate camera ids in frame set: {ids}")
        for v in self.views:
            if v.image.ndim != 3 or v.image.shape[2] != 3 or v.image.dtype != np.uint8:
                raise AdaptError(f"view {v.camera_id!r} is not an 8-bit RGB image")

    @property
    def ids(self) -> list[str]:
        return [v.camera_id for v in self.views]

    def __getitem__(self, cam_id: str) -> View:
        for v in self.views:
            if v.camera_id == cam_id:
                return v
        raise KeyError(cam_id)


@dataclass(frozen=True)
class Identity:
    name = "identity"


@dataclass(frozen=True)
class Homography:
    plane: Plane | None
    inpaint: InpaintParams = InpaintParams()
    name = "homography"


@dataclass(frozen=True)
class DepthReprojection:
    splat: SplatParams = SplatParams()
    inpaint: InpaintParams = InpaintParams()
    single_view: bool = False
    name = "depth"


AUTO = "auto"


@dataclass(frozen=True)
class RemoteNvs:
    """Remote synthesis; ``fallback`` is a method, ``"auto"`` or None.

    ``"auto"`` falls back to depth reprojection when every test view has
    depth and to the homography on ``fallback_plane`` otherwise.
    """

    endpoint: str
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    fallback: object = AUTO
    fallback_plane: Plane | None = None
    name = "remote"


AdapterMethod = Union[Identity, Homography, DepthReprojection, RemoteNvs]


def _ordered_sources(frames: FrameSet, test_rig: CameraRig, target_id: str) -> list[tuple[View, CameraModel]]:
    # Same-id view first, then the remaining views in test-rig order.
    pairs = [(frames[c.id], c) for c in test_rig if c.id in frames.ids]
    return sorted(pairs, key=lambda p: p[1].id != target_id)


def _homography_view(frames, test_rig, cam: CameraModel, m: Homography) -> View:
    out = np.zeros((*cam.intrinsics.shape, 3), dtype=np.uint8)
    mask = np.zeros(cam.intrinsics.shape, dtype=bool)
    for view, src in _ordered_sources(frames, test_rig, cam.id):
        h = plane_homography(src, cam, m.plane)
        img, ok = warp_homography(view.image, h, cam.intrinsics.shape)
        np.copyto(out, img, where=(ok & ~mask)[..., None])
        mask |= ok
        if mask.all():
            break
    return View(cam.id, inpaint_telea(out, mask, m.inpaint).image, mask=mask)


def _depth_view(frames, test_rig, cam: CameraModel, m: DepthReprojection) -> View:
    pairs = _ordered_sources(frames, test_rig, cam.id)
    if m.single_view:
        pairs = pairs[:1]
    layers = []
    if pairs[0][1].id == cam.id:
        # The same-id view is a layer of its own so an unmoved camera is
        # reproduced exactly; the other views only fill its holes.
        layers.append(pairs[:1])
        pairs = pairs[1:]
    if pairs:
        layers.append(pairs)
    out = np.zeros((*cam.intrinsics.shape, 3), dtype=np.uint8)
    mask = np.zeros(cam.intrinsics.shape, dtype=bool)
    for layer in layers:
        img, ok = reproject_views([(v.image, v.depth, c) for v, c in layer], cam, m.splat)
        np.copyto(out, img, where=(ok & ~mask)[..., None])
        mask |= ok
    return View(cam.id, inpaint_telea(out, mask, m.inpaint).image, mask=mask)


def _remote_views(frames, test_rig, train_rig, m: RemoteNvs, client: NvsClient | None) -> tuple[list[View], float]:
    sources = [SourceView(c.intrinsics, c.pose, frames[c.id].image) for c in test_rig if c.id in frames.ids]
    targets = [TargetCamera(c.intrinsics, c.pose) for c in train_rig]
    req = NvsRequest(sources, targets)
    if client is None:
        with NvsClient(m.endpoint, m.timeout_ms) as c:
            resp = c.synthesize(req)
    else:
        resp = client.synthesize(req)
    return [View(c.id, img) for c, img in zip(train_rig, resp.images)], resp.latency_ms


def _resolve_fallback(frames: FrameSet, m: RemoteNvs):
    if m.fallback is None:
        return None
    if m.fallback != AUTO:
        return m.fallback
    if all(v.depth is not None for v in frames.views):
        return DepthReprojection()
    if m.fallback_plane is not None:
        return Homography(m.fallback_plane)
    return None


def adapt(
    frames: FrameSet,
    test_rig: CameraRig,
    train_rig: CameraRig,
    method: AdapterMethod,
    client: NvsClient | None = None,
) -> FrameSet:
    """Synthesize one view per training camera from the test-time views.

    The result carries ``meta["method"]`` (the method that produced the
    images, which differs from ``method`` after a remote fallback), the hole
    filling radius as ``meta["inpaint_radius"]`` for the geometric methods
    and, for remote synthesis, ``meta["remote_latency_ms"]``.
    """
    unknown = set(frames.ids) - set(test_rig.ids)
    if unknown:
        raise IdMismatchError(f"frames from cameras not in the test rig: {sorted(unknown)}")
    if not frames.views:
        raise AdaptError("no test views to adapt")

    if isinstance(method, Identity):
        if set(test_rig.ids) != set(train_rig.ids) or set(frames.ids) != set(train_rig.ids):
            raise IdMismatchError("identity adaptation needs the same camera ids in both rigs")
        return FrameSet(frames.t, tuple(View(c.id, frames[c.id].image) for c in train_rig), {"method": method.name})

    if isinstance(method, Homography):
        if method.plane is None:
            raise MissingPlaneError("homography adaptation needs a plane")
        views = tuple(_homography_view(frames, test_rig, cam, method) for cam in train_rig)
        return FrameSet(frames.t, views, {"method": method.name, "inpaint_radius": method.inpaint.radius})

    if isinstance(method, DepthReprojection):
        missing = [v.camera_id for v in frames.views if v.depth is None]
        if missing:
            raise MissingDepthError(f"views without depth: {missing}")
        for v in frames.views:
            if not valid_depth(v.depth).any():
                raise MissingDepthError(f"view {v.camera_id!r} has no valid depth")
        views = tuple(_depth_view(frames, test_rig, cam, method) for cam in train_rig)
        return FrameSet(frames.t, views, {"method": method.name, "inpaint_radius": method.inpaint.radius})

    if isinstance(method, RemoteNvs):
        try:
            views, latency = _remote_views(frames, test_rig, train_rig, method, client)
        except RemoteError as exc:
            fb = _resolve_fallback(frames, method)
            if fb is None:
                raise RemoteFailure(exc) from exc
            out = adapt(frames, test_rig, train_rig, fb)
            out.meta.update(fallback_from=method.name, remote_error=type(exc).__name__)
            return out
        return FrameSet(frames.t, tuple(views), {"method": method.name, "remote_latency_ms": latency})

    raise TypeError(f"unknown adapter method {method!r}")


def timed_adapt(frames, test_rig, train_rig, method, client=None) -> tuple[FrameSet, float]:
    t0 = time.perf_counter()
    out = adapt(frames, test_rig, train_rig, method, client)
    return out, (time.perf_counter() - t0) * 1e3
