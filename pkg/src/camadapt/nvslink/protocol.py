"""Framed binary protocol for remote novel-view synthesis.

Every message is a frame::

    b"NVS1" | u32 payload_length | payload            (little-endian)

Request payload::

    u8  version            (PROTOCOL_VERSION)
    u64 request_id
    u32 n_sources
    u32 n_targets
    n_sources x { 6 f64 intrinsics: fx fy cx cy width height
                  12 f64 pose: 9 rotation (row-major) + 3 translation
                  width*height*3 bytes RGB, row-major }
    n_targets x { 6 f64 intrinsics, 12 f64 pose }

Response payload::

    u8  version
    u64 request_id
    u8  status             0 = ok, 1 = error
    ok:    u32 n_images, then n_images x { u32 width, u32 height, RGB bytes }
    error: u16 code, u32 message_length, UTF-8 message

Poses are world-to-camera. Images in a response follow the target order.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple

import numpy as np

from ..camgeom import GeometryError, Intrinsics, Pose

MAGIC = b"NVS1"
PROTOCOL_VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024

_FRAME = struct.Struct("<4sI")
_REQ_HEAD = struct.Struct("<BQII")
_CAMERA = struct.Struct("<18d")
_RESP_HEAD = struct.Struct("<BQB")
_ERR_HEAD = struct.Struct("<HI")
_IMG_HEAD = struct.Struct("<II")


class ErrorCode(enum.IntEnum):
    BAD_MAGIC = 1
    TRUNCATED = 2
    VERSION_MISMATCH = 3
    TOO_LARGE = 4
    MALFORMED = 5
    UNSUPPORTED = 6
    INTERNAL = 7


class ProtocolError(Exception):
    def __init__(self, code: ErrorCode, message: str):
        code = ErrorCode(code)
        super().__init__(f"{code.name}: {message}")
        self.code = code
        self.message = message


class SourceView(NamedTuple):
    intrinsics: Intrinsics
    pose: Pose
    image: np.ndarray


class TargetCamera(NamedTuple):
    intrinsics: Intrinsics
    pose: Pose


@dataclass
class NvsRequest:
    sources: list[SourceView]
    targets: list[TargetCamera]
    request_id: int = 0
    version: int = PROTOCOL_VERSION

    def validate(self) -> None:
        if not self.sources:
            raise ProtocolError(ErrorCode.MALFORMED, "request needs at least one source view")
        if not self.targets:
            raise ProtocolError(ErrorCode.MALFORMED, "request needs at least one target camera")
        shapes = {s.image.shape for s in self.sources}
        if len(shapes) != 1:
            raise ProtocolError(ErrorCode.MALFORMED, f"source images differ in size: {sorted(shapes)}")
        for s in self.sources:
            k = s.intrinsics
            if s.image.shape != (k.height, k.width, 3) or s.image.dtype != np.uint8:
                raise ProtocolError(ErrorCode.MALFORMED, "source image does not match its intrinsics")

    def __eq__(self, other):
        if not isinstance(other, NvsRequest):
            return NotImplemented
        return (
            self.version == other.version
            and self.request_id == other.request_id
            and len(self.sources) == len(other.sources)
            and all(
                a.intrinsics == b.intrinsics and a.pose == b.pose and np.array_equal(a.image, b.image)
                for a, b in zip(self.sources, other.sources)
            )
            and self.targets == other.targets
        )


@dataclass
class NvsResponse:
    request_id: int
    images: list[np.ndarray] = field(default_factory=list)
    error_code: ErrorCode | None = None
    message: str = ""
    version: int = PROTOCOL_VERSION
    latency_ms: float | None = None  # filled in by the client, never on the wire

    @property
    def ok(self) -> bool:
        return self.error_code is None

    def __eq__(self, other):
        if not isinstance(other, NvsResponse):
            return NotImplemented
        return (
            self.request_id == other.request_id
            and self.error_code == other.error_code
            and self.message == other.message
            and self.version == other.version
            and len(self.images) == len(other.images)
            and all(np.array_equal(a, b) for a, b in zip(self.images, other.images))
        )


def frame(payload: bytes) -> bytes:
    return _FRAME.pack(MAGIC, len(payload)) + payload


def _camera_fields(k: Intrinsics, p: Pose) -> bytes:
    return _CAMERA.pack(k.fx, k.fy, k.cx, k.cy, k.width, k.height, *p.rotation.ravel(), *p.translation)


def request_size(image_shapes: list[tuple[int, int]], n_targets: int) -> int:
    """Encoded frame size for sources of the given (height, width)."""
    payload = _REQ_HEAD.size + n_targets * _CAMERA.size
    payload += sum(_CAMERA.size + h * w * 3 for h, w in image_shapes)
    return _FRAME.size + payload


def encode_request(req: NvsRequest) -> bytes:
    req.validate()
    parts = [_REQ_HEAD.pack(req.version, req.request_id, len(req.sources), len(req.targets))]
    for s in req.sources:
        parts.append(_camera_fields(s.intrinsics, s.pose))
        parts.append(np.ascontiguousarray(s.image, dtype=np.uint8).tobytes())
    for t in req.targets:
        parts.append(_camera_fields(t.intrinsics, t.pose))
    return frame(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise ProtocolError(ErrorCode.TRUNCATED, "payload ends early")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def done(self):
        if self.pos != len(self.buf):
            raise ProtocolError(ErrorCode.MALFORMED, f"{len(self.buf) - self.pos} trailing bytes")


def _read_camera(rd: _Reader) -> tuple[Intrinsics, Pose]:
    v = rd.unpack(_CAMERA)
    w, h = v[4], v[5]
    if not (w == int(w) and h == int(h) and 1 <= w <= 65535 and 1 <= h <= 65535):
        raise ProtocolError(ErrorCode.MALFORMED, f"bad image size {w}x{h}")
    try:
        k = Intrinsics(v[0], v[1], v[2], v[3], int(w), int(h))
        p = Pose(np.array(v[6:15]).reshape(3, 3), np.array(v[15:18]))
    except GeometryError as exc:
        raise ProtocolError(ErrorCode.MALFORMED, str(exc)) from exc
    return k, p


def split_frame(data: bytes, max_payload: int = MAX_PAYLOAD) -> bytes:
    """Validate a complete frame and return its payload."""
    if len(data) < _FRAME.size:
        raise ProtocolError(ErrorCode.TRUNCATED, "frame header ends early")
    magic, n = _FRAME.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolError(ErrorCode.BAD_MAGIC, f"bad magic {bytes(magic)!r}")
    if n > max_payload:
        raise ProtocolError(ErrorCode.TOO_LARGE, f"payload of {n} bytes exceeds {max_payload}")
    if len(data) - _FRAME.size < n:
        raise ProtocolError(ErrorCode.TRUNCATED, "frame payload ends early")
    if len(data) - _FRAME.size > n:
        raise ProtocolError(ErrorCode.MALFORMED, "bytes after the frame payload")
    return data[_FRAME.size :]


def decode_request_payload(payload: bytes) -> NvsRequest:
    rd = _Reader(payload)
    version, rid, n_src, n_tgt = rd.unpack(_REQ_HEAD)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(ErrorCode.VERSION_MISMATCH, f"version {version}, expected {PROTOCOL_VERSION}")
    sources = []
    for _ in range(n_src):
        k, p = _read_camera(rd)
        raw = rd.take(k.width * k.height * 3)
        img = np.frombuffer(raw, dtype=np.uint8).reshape(k.height, k.width, 3).copy()
        sources.append(SourceView(k, p, img))
    targets = [TargetCamera(*_read_camera(rd)) for _ in range(n_tgt)]
    rd.done()
    req = NvsRequest(sources, targets, rid, version)
    req.validate()
    return req


def decode_request(data: bytes, max_payload: int = MAX_PAYLOAD) -> NvsRequest:
    return decode_request_payload(split_frame(data, max_payload))


def encode_response(resp: NvsResponse) -> bytes:
    if resp.ok:
        parts = [_RESP_HEAD.pack(resp.version, resp.request_id, 0), struct.pack("<I", len(resp.images))]
        for img in resp.images:
            img = np.ascontiguousarray(img, dtype=np.uint8)
            parts.append(_IMG_HEAD.pack(img.shape[1], img.shape[0]))
            parts.append(img.tobytes())
    else:
        msg = resp.message.encode("utf-8")
        parts = [_RESP_HEAD.pack(resp.version, resp.request_id, 1), _ERR_HEAD.pack(int(resp.error_code), len(msg)), msg]
    return frame(b"".join(parts))


def decode_response_payload(payload: bytes) -> NvsResponse:
    rd = _Reader(payload)
    version, rid, status = rd.unpack(_RESP_HEAD)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(ErrorCode.VERSION_MISMATCH, f"version {version}, expected {PROTOCOL_VERSION}")
    if status == 0:
        (n,) = struct.unpack("<I", rd.take(4))
        images = []
        for _ in range(n):
            w, h = rd.unpack(_IMG_HEAD)
            images.append(np.frombuffer(rd.take(w * h * 3), dtype=np.uint8).reshape(h, w, 3).copy())
        rd.done()
        return NvsResponse(rid, images, version=version)
    if status == 1:
        code, n = rd.unpack(_ERR_HEAD)
        msg = bytes(rd.take(n)).decode("utf-8", errors="replace")
        rd.done()
        try:
            code = ErrorCode(code)
        except ValueError:
            code = ErrorCode.INTERNAL
        return NvsResponse(rid, [], code, msg, version)
    raise ProtocolError(ErrorCode.MALFORMED, f"unknown status {status}")


def decode_response(data: bytes, max_payload: int = MAX_PAYLOAD) -> NvsResponse:
    return decode_response_payload(split_frame(data, max_payload))


def read_frame(stream: BinaryIO, max_payload: int = MAX_PAYLOAD) -> bytes | None:
    """Read one frame's payload from a buffered stream; None on clean EOF."""
    head = stream.read(_FRAME.size)
    if not head:
        return None
    if len(head) < _FRAME.size:
        raise ProtocolError(ErrorCode.TRUNCATED, "frame header ends early")
    magic, n = _FRAME.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(ErrorCode.BAD_MAGIC, f"bad magic {magic!r}")
    if n > max_payload:
        raise ProtocolError(ErrorCode.TOO_LARGE, f"payload of {n} bytes exceeds {max_payload}")
    payload = stream.read(n)
    if len(payload) < n:
        raise ProtocolError(ErrorCode.TRUNCATED, "frame payload ends early")
    return payload
