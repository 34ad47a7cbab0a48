"""Binary image, depth and mask files.

* Images: binary PPM (``P6``, maxval 255), arrays of shape (H, W, 3) uint8.
* Masks: binary PBM (``P4``); a set bit means the pixel is valid (True).
* Depth: 16-byte header ``b"DPTH"``, u32 width, u32 height, u32 reserved
  (0), then ``width * height`` little-endian float32 values, row-major.
  Invalid pixels are stored as NaN.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

DEPTH_MAGIC = b"DPTH"
_DEPTH_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    pass


def _read_netpbm_header(data: bytes, magic: bytes, nfields: int):
    if data[:2] != magic:
        raise FormatError(f"expected {magic.decode()} header")
    fields: list[int] = []
    pos = 2
    n = len(data)
    while len(fields) < nfields:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed netpbm header")
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError("malformed netpbm header")
    return fields, pos + 1


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"image must be (H, W, 3), got {img.shape}")
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    (w, h, maxval), off = _read_netpbm_header(data, b"P6", 3)
    if maxval != 255:
        raise FormatError("only maxval 255 is supported")
    size = w * h * 3
    if len(data) - off < size:
        raise FormatError("truncated PPM data")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=off).reshape(h, w, 3).copy()


def encode_pbm(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    return b"P4\n%d %d\n" % (w, h) + np.packbits(mask, axis=1).tobytes()


def decode_pbm(data: bytes) -> np.ndarray:
    (w, h), off = _read_netpbm_header(data, b"P4", 2)
    row = (w + 7) // 8
    if len(data) - off < row * h:
        raise FormatError("truncated PBM data")
    packed = np.frombuffer(data, dtype=np.uint8, count=row * h, offset=off).reshape(h, row)
    return np.unpackbits(packed, axis=1, count=w).astype(bool)


def encode_depth(depth: np.ndarray) -> bytes:
    depth = np.asarray(depth, dtype="<f4")
    h, w = depth.shape
    return _DEPTH_HEADER.pack(DEPTH_MAGIC, w, h, 0) + np.ascontiguousarray(depth).tobytes()


def decode_depth(data: bytes) -> np.ndarray:
    if len(data) < _DEPTH_HEADER.size:
        raise FormatError("truncated depth header")
    magic, w, h, _ = _DEPTH_HEADER.unpack_from(data)
    if magic != DEPTH_MAGIC:
        raise FormatError("bad depth magic")
    if len(data) - _DEPTH_HEADER.size < 4 * w * h:
        raise FormatError("truncated depth data")
    arr = np.frombuffer(data, dtype="<f4", count=w * h, offset=_DEPTH_HEADER.size)
    return arr.reshape(h, w).astype(np.float32)


def write_ppm(path, img) -> None:
    Path(path).write_bytes(encode_ppm(img))


def read_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def write_pbm(path, mask) -> None:
    Path(path).write_bytes(encode_pbm(mask))


def read_pbm(path) -> np.ndarray:
    return decode_pbm(Path(path).read_bytes())


def write_depth(path, depth) -> None:
    Path(path).write_bytes(encode_depth(depth))


def read_depth(path) -> np.ndarray:
    return decode_depth(Path(path).read_bytes())
