"""Telea fast-marching inpainting.

Hole pixels are visited in increasing arrival time ``T`` of a front that
starts on the hole boundary and obeys ``|grad T| = 1`` (upwind Eikonal
update). Each visited pixel becomes a normalised weighted average of the
already-valued pixels within ``radius``::

    w(p, q) = |dir| * dst * lev
    dir = (p - q) . grad T(p) / |p - q|       (floored at 1e-6 when |dir| <= 0.01)
    dst = 1 / |p - q|**2
    lev = 1 / (1 + |T(q) - T(p)|)

Known pixels carry ``T = -distance`` to the hole boundary, taken from an
exact Euclidean distance transform and clipped at ``band``. No gradient
extrapolation term is used, so every filled value is a convex combination
of known values.

Heap ties are broken by (row, column), which makes the fill order and the
output fully deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

KNOWN = 0
BAND = 1
INSIDE = 2
FAR = 1.0e6

FALLBACK_COLOR = (128, 128, 128)


class InpaintWarning(UserWarning):
    pass


@dataclass(frozen=True)
class InpaintParams:
    radius: int = 5
    band: int | None = None
    fallback_color: tuple[int, int, int] = FALLBACK_COLOR

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("inpaint radius must be >= 1")
        if self.band is not None and self.band < 1:
            raise ValueError("band width must be >= 1")

    @property
    def band_width(self) -> int:
        return self.radius if self.band is None else self.band


class InpaintResult(NamedTuple):
    image: np.ndarray
    fallback_used: bool


@njit(cache=True, inline="always")
def _less(kt, ki, a, b):
    return kt[a] < kt[b] or (kt[a] == kt[b] and ki[a] < ki[b])


@njit(cache=True, inline="always")
def _push(kt, ki, n, t, idx):
    # Binary min-heap on (t, flat index) held in parallel arrays; returns the new size.
    kt[n] = t
    ki[n] = idx
    c = n
    while c > 0:
        p = (c - 1) >> 1
        if not _less(kt, ki, c, p):
            break
        kt[c], kt[p] = kt[p], kt[c]
        ki[c], ki[p] = ki[p], ki[c]
        c = p
    return n + 1


@njit(cache=True, inline="always")
def _pop(kt, ki, n):
    t, idx = kt[0], ki[0]
    n -= 1
    kt[0] = kt[n]
    ki[0] = ki[n]
    c = 0
    while True:
        a = 2 * c + 1
        if a >= n:
            break
        if a + 1 < n and _less(kt, ki, a + 1, a):
            a += 1
        if not _less(kt, ki, a, c):
            break
        kt[c], kt[a] = kt[a], kt[c]
        ki[c], ki[a] = ki[a], ki[c]
        c = a
    return t, idx, n


@njit(cache=True, inline="always")
def _solve(i1, j1, i2, j2, flag, T):
    h, w = T.shape
    in1 = 0 <= i1 < h and 0 <= j1 < w and flag[i1, j1] != INSIDE
    in2 = 0 <= i2 < h and 0 <= j2 < w and flag[i2, j2] != INSIDE
    a1 = T[i1, j1] if in1 else FAR
    a2 = T[i2, j2] if in2 else FAR
    if in1 and in2:
        if abs(a1 - a2) >= 1.0:
            return 1.0 + min(a1, a2)
        return 0.5 * (a1 + a2 + np.sqrt(2.0 - (a1 - a2) * (a1 - a2)))
    if in1:
        return 1.0 + a1
    if in2:
        return 1.0 + a2
    return FAR


@njit(cache=True, inline="always")
def _arrival(i, j, flag, T):
    return min(
        min(_solve(i - 1, j, i, j - 1, flag, T), _solve(i + 1, j, i, j - 1, flag, T)),
        min(_solve(i - 1, j, i, j + 1, flag, T), _solve(i + 1, j, i, j + 1, flag, T)),
    )


@njit(cache=True)
def _march(region, limit):
    """Distance from the complement of ``region`` into it, up to ``limit``.

    Pixels of ``region`` keep FAR when they lie beyond ``limit``.
    """
    h, w = region.shape
    flag = np.zeros((h, w), dtype=np.uint8)
    T = np.zeros((h, w))
    kt = np.empty(5 * h * w)
    ki = np.empty(5 * h * w, dtype=np.int64)
    n = 0
    di = (-1, 1, 0, 0)
    dj = (0, 0, -1, 1)
    for i in range(h):
        for j in range(w):
            if region[i, j]:
                flag[i, j] = INSIDE
                T[i, j] = FAR
    for i in range(h):
        for j in range(w):
            if not region[i, j]:
                for m in range(4):
                    k, l = i + di[m], j + dj[m]
                    if 0 <= k < h and 0 <= l < w and region[k, l]:
                        flag[i, j] = BAND
                        n = _push(kt, ki, n, 0.0, i * w + j)
                        break
    while n > 0:
        t, idx, n = _pop(kt, ki, n)
        i, j = idx // w, idx % w
        if flag[i, j] == KNOWN:
            continue
        if t > limit:
            break
        flag[i, j] = KNOWN
        for m in range(4):
            k, l = i + di[m], j + dj[m]
            if 0 <= k < h and 0 <= l < w and flag[k, l] == INSIDE:
                T[k, l] = _arrival(k, l, flag, T)
                flag[k, l] = BAND
                n = _push(kt, ki, n, T[k, l], k * w + l)
    return T


@njit(cache=True, inline="always")
def _grad(i, j, flag, T):
    h, w = T.shape
    up = i - 1 >= 0 and flag[i - 1, j] != INSIDE
    dn = i + 1 < h and flag[i + 1, j] != INSIDE
    lf = j - 1 >= 0 and flag[i, j - 1] != INSIDE
    rt = j + 1 < w and flag[i, j + 1] != INSIDE
    if up and dn:
        gy = 0.5 * (T[i + 1, j] - T[i - 1, j])
    elif dn:
        gy = T[i + 1, j] - T[i, j]
    elif up:
        gy = T[i, j] - T[i - 1, j]
    else:
        gy = 0.0
    if lf and rt:
        gx = 0.5 * (T[i, j + 1] - T[i, j - 1])
    elif rt:
        gx = T[i, j + 1] - T[i, j]
    elif lf:
        gx = T[i, j] - T[i, j - 1]
    else:
        gx = 0.0
    return gy, gx


@njit(cache=True)
def _disc(radius):
    """Offsets within ``radius`` (excluding the centre) and their 1/|r|, 1/|r|^2."""
    n = 0
    for k in range(-radius, radius + 1):
        for l in range(-radius, radius + 1):
            if 0 < k * k + l * l <= radius * radius:
                n += 1
    oy = np.empty(n, dtype=np.int64)
    ox = np.empty(n, dtype=np.int64)
    inv = np.empty(n)
    inv2 = np.empty(n)
    n = 0
    for k in range(-radius, radius + 1):
        for l in range(-radius, radius + 1):
            lr2 = k * k + l * l
            if 0 < lr2 <= radius * radius:
                oy[n] = k
                ox[n] = l
                inv[n] = 1.0 / np.sqrt(lr2)
                inv2[n] = 1.0 / lr2
                n += 1
    return oy, ox, inv, inv2


@njit(cache=True, inline="always")
def _fill_pixel(i, j, img, flag, T, oy, ox, inv, inv2):
    gy, gx = _grad(i, j, flag, T)
    t0 = T[i, j]
    acc0 = 0.0
    acc1 = 0.0
    acc2 = 0.0
    wsum = 0.0
    # The arrays carry a margin of at least ``radius`` flagged INSIDE, so no
    # bounds checks are needed here.
    for n in range(oy.size):
        k = i + oy[n]
        l = j + ox[n]
        if flag[k, l] == INSIDE:
            continue
        d = abs((gy * (i - k) + gx * (j - l)) * inv[n])
        if d <= 0.01:
            d = 1e-6
        wt = d * inv2[n] / (1.0 + abs(T[k, l] - t0))
        acc0 += wt * img[k, l, 0]
        acc1 += wt * img[k, l, 1]
        acc2 += wt * img[k, l, 2]
        wsum += wt
    if wsum > 0.0:
        img[i, j, 0] = acc0 / wsum
        img[i, j, 1] = acc1 / wsum
        img[i, j, 2] = acc2 / wsum


_DI = (-1, 1, 0, 0)
_DJ = (0, 0, -1, 1)


@njit(cache=True, inline="always")
def _visit(i, j, img, flag, T, kt, ki, n, oy, ox, inv, inv2, pad):
    # Freeze (i, j) and fill its not-yet-reached 4-neighbours inside the margin.
    h, w = T.shape
    flag[i, j] = KNOWN
    for m in range(4):
        k, l = i + _DI[m], j + _DJ[m]
        if pad <= k < h - pad and pad <= l < w - pad and flag[k, l] == INSIDE:
            T[k, l] = _arrival(k, l, flag, T)
            _fill_pixel(k, l, img, flag, T, oy, ox, inv, inv2)
            flag[k, l] = BAND
            n = _push(kt, ki, n, T[k, l], k * w + l)
    return n


@njit(cache=True)
def _telea(img, known, outside, radius, band):
    h0, w0 = known.shape
    pad = radius
    h, w = h0 + 2 * pad, w0 + 2 * pad
    T = np.full((h, w), FAR)
    flag = np.full((h, w), INSIDE, dtype=np.uint8)
    work = np.zeros((h, w, 3))
    for i in range(h0):
        for j in range(w0):
            for c in range(3):
                work[i + pad, j + pad, c] = img[i, j, c]
            if known[i, j]:
                T[i + pad, j + pad] = -min(outside[i, j], float(band))
                flag[i + pad, j + pad] = KNOWN
    oy, ox, inv, inv2 = _disc(radius)
    # Every hole pixel enters the heap once, so its size is bounded by h * w.
    kt = np.empty(h * w)
    ki = np.empty(h * w, dtype=np.int64)
    band_px = np.empty(h * w, dtype=np.int64)
    nb = 0
    for i in range(h0):
        for j in range(w0):
            if known[i, j]:
                for m in range(4):
                    k, l = i + _DI[m], j + _DJ[m]
                    if 0 <= k < h0 and 0 <= l < w0 and not known[k, l]:
                        flag[i + pad, j + pad] = BAND
                        T[i + pad, j + pad] = 0.0
                        band_px[nb] = (i + pad) * w + j + pad
                        nb += 1
                        break
    # The boundary pixels all sit at T = 0 and every arrival they produce is
    # positive, so they leave the queue first and in raster order; visiting
    # them directly keeps the heap small. Padded indices keep raster order.
    n = 0
    for b in range(nb):
        n = _visit(band_px[b] // w, band_px[b] % w, work, flag, T, kt, ki, n, oy, ox, inv, inv2, pad)
    while n > 0:
        t, idx, n = _pop(kt, ki, n)
        n = _visit(idx // w, idx % w, work, flag, T, kt, ki, n, oy, ox, inv, inv2, pad)
    return work[pad : h - pad, pad : w - pad], T[pad : h - pad, pad : w - pad]


_BIG = 1.0e20


@njit(cache=True)
def _dt1d(f, d, v, z):
    # Lower envelope of parabolas (Felzenszwalb and Huttenlocher).
    n = f.size
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


@njit(cache=True)
def _edt(mask):
    """Exact Euclidean distance from each True pixel to the nearest False one."""
    h, w = mask.shape
    g = np.empty((h, w))
    n = max(h, w)
    f = np.empty(n)
    d = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for j in range(w):
        for i in range(h):
            f[i] = _BIG if mask[i, j] else 0.0
        _dt1d(f[:h], d[:h], v, z)
        for i in range(h):
            g[i, j] = d[i]
    for i in range(h):
        for j in range(w):
            f[j] = g[i, j]
        _dt1d(f[:w], d[:w], v, z)
        for j in range(w):
            g[i, j] = np.sqrt(d[j])
    return g


@njit(cache=True)
def _finish(img, work, known):
    # Known pixels are copied verbatim; filled ones rounded half-to-even.
    out = img.copy()
    h, w = known.shape
    for i in range(h):
        for j in range(w):
            if not known[i, j]:
                for c in range(3):
                    out[i, j, c] = np.uint8(min(max(np.rint(work[i, j, c]), 0.0), 255.0))
    return out


def known_distance(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance of each valid pixel to the hole boundary (0 next to a hole)."""
    return _edt(np.ascontiguousarray(mask, dtype=np.bool_)) - 1.0


def fmm_distance(mask: np.ndarray) -> np.ndarray:
    """Eikonal arrival time of the front from valid pixels into the holes.

    Valid (True) pixels get 0; hole pixels get their fast-marching distance
    to the nearest valid pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    hole = ~mask
    T = _march(hole, np.inf)
    return np.where(hole, T, 0.0)


def inpaint_telea(img: np.ndarray, mask: np.ndarray, params: InpaintParams = InpaintParams()) -> InpaintResult:
    img = np.asarray(img)
    mask = np.asarray(mask, dtype=bool)
    if img.shape[:2] != mask.shape or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image {img.shape} and mask {mask.shape} dimensions differ")
    if mask.all():
        return InpaintResult(img.copy(), False)
    if not mask.any():
        warnings.warn("no valid pixels to inpaint from; using fallback colour", InpaintWarning, stacklevel=2)
        out = np.empty_like(img, dtype=np.uint8)
        out[:] = np.array(params.fallback_color, dtype=np.uint8)
        return InpaintResult(out, True)
    img8 = np.ascontiguousarray(img, dtype=np.uint8)
    work, _ = _telea(img8.astype(np.float64), mask, known_distance(mask), params.radius, params.band_width)
    return InpaintResult(_finish(img8, work, mask), False)


def adapt_and_fill(img: np.ndarray, mask: np.ndarray, params: InpaintParams = InpaintParams()) -> np.ndarray:
    """Fill the holes of a warped image; all-valid input is returned as is."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == np.asarray(img).shape[:2] and mask.all():
        return img
    return inpaint_telea(img, mask, params).image
