"""Image-quality metrics and Markov-chain mixing diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .images import ImageField

__all__ = [
    "MetricReport",
    "psnr",
    "ssim",
    "acf",
    "iat",
    "median_variance_probe",
    "DegenerateSeriesError",
]


class DegenerateSeriesError(ValueError):
    """Raised for constant or too-short series."""


class MetricError(ValueError):
    """Raised for incompatible metric inputs."""


@dataclass(frozen=True)
class MetricReport:
    """Bundle of scores produced by the metrics CLI."""

    psnr_db: float
    ssim: float
    iat: float | None = None
    iat_reliable: bool = True
    acf_head: tuple[float, ...] = ()


def psnr(reference: ImageField, test: ImageField, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio 10 log10(peak^2 / MSE) in dB.

    Identical images (MSE = 0) return +inf.
    """
    if reference.shape != test.shape:
        raise MetricError(f"shape mismatch: {reference.shape} vs {test.shape}")
    if peak <= 0:
        raise MetricError(f"peak must be positive, got {peak}")
    mse = float(np.mean((reference.data - test.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _ssim_window() -> np.ndarray:
    half = (_SSIM_WIN - 1) // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * _SSIM_SIGMA**2))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed_sums(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    # 'valid' correlation with the (symmetric) window
    from scipy.signal import fftconvolve

    return fftconvolve(img, win, mode="valid")


def ssim(reference: ImageField, test: ImageField) -> float:
    """Mean local structural similarity.

    Fixed parameterization (reported scores are variant-dependent, so it is
    pinned here): 11x11 Gaussian window with sigma 1.5, weighted (window)
    moments, stabilizers K1 = 0.01 and K2 = 0.03, dynamic range 1.
    Channels are scored independently and averaged.
    """
    if reference.shape != test.shape:
        raise MetricError(f"shape mismatch: {reference.shape} vs {test.shape}")
    if reference.height < _SSIM_WIN or reference.width < _SSIM_WIN:
        raise MetricError(f"images must be at least {_SSIM_WIN}x{_SSIM_WIN}")
    win = _ssim_window()
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2
    scores = []
    for ch in range(reference.channels):
        a = reference.data[:, :, ch]
        b = test.data[:, :, ch]
        mu_a = _windowed_sums(a, win)
        mu_b = _windowed_sums(b, win)
        var_a = _windowed_sums(a * a, win) - mu_a**2
        var_b = _windowed_sums(b * b, win) - mu_b**2
        cov = _windowed_sums(a * b, win) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation up to ``max_lag`` (biased estimator, acf[0] = 1).

    The lag-k autocovariance is (1/N) sum_t (x_t - mean)(x_{t+k} - mean),
    normalized by the lag-0 value.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.size
    if max_lag < 0 or n <= max_lag:
        raise DegenerateSeriesError(f"series of length {n} cannot support max_lag {max_lag}")
    x = x - x.mean()
    if not np.any(x):
        raise DegenerateSeriesError("constant series has no autocorrelation")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fx = np.fft.rfft(x, nfft)
    full = np.fft.irfft(fx * np.conj(fx), nfft)[: max_lag + 1]
    return full / full[0]


def iat(series: np.ndarray) -> float:
    """Integrated autocorrelation time 1 + 2 sum_k acf(k).

    The sum is truncated by the initial-positive-sequence rule: lag pairs
    (acf[1] + acf[2]), (acf[3] + acf[4]), ... are accumulated while their
    sums stay positive and summation stops at the first nonpositive pair.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size < 1000:
        raise DegenerateSeriesError(f"series too short for IAT ({x.size} < 1000)")
    rho = acf(x, x.size - 1)
    total = 0.0
    k = 1
    while k + 1 < rho.size:
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        total += pair
        k += 2
    return 1.0 + 2.0 * total


def median_variance_probe(traces: Mapping[int, np.ndarray]) -> int:
    """Pixel whose post-burn-in trace variance is the median across probes.

    Even counts take the lower median.
    """
    if not traces:
        raise MetricError("empty trace set")
    keys = list(traces.keys())
    variances = np.array([float(np.var(np.asarray(traces[k], dtype=np.float64))) for k in keys])
    order = np.argsort(variances, kind="stable")
    pick = order[(len(keys) - 1) // 2]
    return keys[pick]
