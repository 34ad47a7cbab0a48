"""In-process mock of the remote view-synthesis service.

Modes:

* ``echo``  - target ``i`` receives source image ``i mod n_sources``.
* ``oracle`` - renders every target camera from the held scene.
* ``geom``  - depth reprojection of the request's source images plus
  inpainting; the source depth comes from rendering the held scene, the way
  a simulator exposes ground-truth depth.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..camgeom import CameraModel
from ..inpaint import InpaintParams, inpaint_telea
from ..scenesim import SceneDescription, render
from ..warpcore import SplatParams, reproject_views
from .protocol import (
    MAX_PAYLOAD,
    ErrorCode,
    NvsRequest,
    NvsResponse,
    ProtocolError,
    decode_request_payload,
    encode_response,
    read_frame,
)

log = logging.getLogger(__name__)

MODES = ("echo", "oracle", "geom")


@dataclass
class MockConfig:
    mode: str = "echo"
    scene: SceneDescription | None = None
    splat: SplatParams = SplatParams()
    inpaint: InpaintParams = InpaintParams()
    max_payload: int = MAX_PAYLOAD

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mock mode {self.mode!r}; expected one of {MODES}")
        if self.mode in ("oracle", "geom") and self.scene is None:
            raise ValueError(f"mode {self.mode!r} needs a scene")


def synthesize(cfg: MockConfig, req: NvsRequest) -> list[np.ndarray]:
    cams = [CameraModel(f"target{i}", t.intrinsics, t.pose) for i, t in enumerate(req.targets)]
    if cfg.mode == "echo":
        out = []
        for i, cam in enumerate(cams):
            img = req.sources[i % len(req.sources)].image
            if img.shape[:2] != cam.intrinsics.shape:
                raise ProtocolError(ErrorCode.UNSUPPORTED, "echo mode needs targets sized like the sources")
            out.append(img)
        return out
    if cfg.mode == "oracle":
        return [render(cfg.scene, cam).image for cam in cams]
    views = []
    for i, s in enumerate(req.sources):
        src = CameraModel(f"source{i}", s.intrinsics, s.pose)
        views.append((s.image, render(cfg.scene, src).depth, src))
    out = []
    for cam in cams:
        img, mask = reproject_views(views, cam, cfg.splat)
        out.append(inpaint_telea(img, mask, cfg.inpaint).image)
    return out


class _Handler(socketserver.StreamRequestHandler):
    server: "_Server"

    def setup(self):
        super().setup()
        self.connection.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _send(self, resp: NvsResponse) -> None:
        self.wfile.write(encode_response(resp))
        self.wfile.flush()

    def handle(self):
        cfg = self.server.config
        while True:
            try:
                payload = read_frame(self.rfile, cfg.max_payload)
            except ProtocolError as exc:
                # Framing is lost; report and drop the connection.
                self._try_send(NvsResponse(0, [], exc.code, exc.message))
                return
            except OSError:
                return
            if payload is None:
                return
            t0 = time.perf_counter()
            rid = int.from_bytes(payload[1:9], "little") if len(payload) >= 9 else 0
            try:
                req = decode_request_payload(payload)
                resp = NvsResponse(req.request_id, synthesize(cfg, req))
            except ProtocolError as exc:
                resp = NvsResponse(rid, [], exc.code, exc.message)
            except Exception as exc:  # never let a request kill the server
                log.exception("mock NVS request failed")
                resp = NvsResponse(rid, [], ErrorCode.INTERNAL, str(exc))
            self.server.record((time.perf_counter() - t0) * 1e3)
            if not self._try_send(resp):
                return

    def _try_send(self, resp: NvsResponse) -> bool:
        try:
            self._send(resp)
            return True
        except OSError:
            return False


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    block_on_close = False

    def __init__(self, address, config: MockConfig):
        super().__init__(address, _Handler)
        self.config = config
        self._lock = threading.Lock()
        self.handled_ms: list[float] = []

    def record(self, ms: float) -> None:
        with self._lock:
            self.handled_ms.append(ms)


class MockServer:
    """Running mock service; use as a context manager or call :meth:`stop`."""

    def __init__(self, config: MockConfig, host: str = "127.0.0.1", port: int = 0):
        self._server = _Server((host, port), config)
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"{host}:{port}"

    @property
    def handled_ms(self) -> list[float]:
        with self._server._lock:
            return list(self._server.handled_ms)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def mock_server(mode: str = "echo", bind: str = "127.0.0.1:0", scene: SceneDescription | None = None, **kw) -> MockServer:
    host, _, port = bind.rpartition(":")
    return MockServer(MockConfig(mode, scene, **kw), host or "127.0.0.1", int(port or 0))
