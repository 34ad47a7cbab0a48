"""PSNR and SSIM for 8-bit RGB images."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 99.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
_K1, _K2, _L = 0.01, 0.03, 255.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricResult:
    psnr: float
    ssim: float
    valid_fraction: float


def _check_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise MetricError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """PSNR in dB over mask-true pixels, capped at 99 dB."""
    a, b = _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[:2]:
            raise MetricError("mask shape does not match the images")
        if not mask.any():
            raise MetricError("PSNR over an empty mask")
        diff = diff[mask]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(_L * _L / mse))


def luma(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma as float64."""
    f = np.asarray(img, dtype=np.float64)
    if f.ndim == 2:
        return f
    return 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]


def _gaussian_window() -> np.ndarray:
    x = np.arange(SSIM_WIN) - SSIM_WIN // 2
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA**2))
    return g / g.sum()


def _local_mean(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = SSIM_WIN // 2
    out = correlate1d(correlate1d(x, g, axis=0, mode="nearest"), g, axis=1, mode="nearest")
    return out[r:-r, r:-r]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM on luma, mean over all fully-inside 11x11 windows."""
    a, b = _check_pair(a, b)
    if min(a.shape[:2]) < SSIM_WIN:
        raise MetricError(f"SSIM needs images of at least {SSIM_WIN}x{SSIM_WIN}")
    x, y = luma(a), luma(b)
    g = _gaussian_window()
    mx, my = _local_mean(x, g), _local_mean(y, g)
    sxx = _local_mean(x * x, g) - mx * mx
    syy = _local_mean(y * y, g) - my * my
    sxy = _local_mean(x * y, g) - mx * my
    c1 = (_K1 * _L) ** 2
    c2 = (_K2 * _L) ** 2
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def compare(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> MetricResult:
    frac = 1.0 if mask is None else float(np.mean(mask))
    return MetricResult(psnr(a, b, mask), ssim(a, b), frac)
