"""Metrics, benchmark sweeps and the command-line interface."""

from .metrics import MetricResult, compare, psnr, ssim
