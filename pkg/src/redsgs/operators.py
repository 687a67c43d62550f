"""Linear degradation operators and measurement simulation.

Four operator variants cover the supported forward models:

* ``Circulant`` -- periodic (circular) convolution with a centered kernel,
  applied channel-wise. Periodic boundaries are a deliberate choice: they
  make the operator diagonal in the Fourier basis, which the samplers
  exploit.
* ``Mask`` -- keeps a boolean subset of pixel-channel entries, packed in
  scan (row-major) order.
* ``Downsample`` -- regular subsampling by an integer factor, keeping the
  top-left sample of each block.
* ``BlurThenDownsample`` -- the composition S B (blur first, then
  subsample), as used for super-resolution.

All operators are immutable after construction and safe to share across
concurrent chains.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from .images import ImageField
from .rng import RngStream

__all__ = [
    "DegradationOp",
    "Circulant",
    "Mask",
    "Downsample",
    "BlurThenDownsample",
    "NoiseModel",
    "apply_op",
    "adjoint_op",
    "degrade",
    "sigma_from_snr",
    "gaussian_kernel",
    "random_mask",
    "dense_matrix",
]


class OperatorError(ValueError):
    """Raised on dimension mismatches or invalid operator parameters."""


def gaussian_kernel(size: int, std: float) -> np.ndarray:
    """Normalized 2D Gaussian kernel with odd side length ``size``."""
    if size < 1 or size % 2 == 0:
        raise OperatorError(f"kernel size must be odd and positive, got {size}")
    if std <= 0:
        raise OperatorError(f"kernel std must be positive, got {std}")
    half = (size - 1) // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    k = np.exp(-(xx**2 + yy**2) / (2.0 * std**2))
    return k / k.sum()


def _embed_kernel_fft(kernel: np.ndarray, height: int, width: int) -> np.ndarray:
    """FFT of the kernel zero-embedded on the image grid, center at (0, 0)."""
    kh, kw = kernel.shape
    if kh > height or kw > width:
        raise OperatorError(f"kernel {kh}x{kw} larger than image {height}x{width}")
    emb = np.zeros((height, width))
    emb[:kh, :kw] = kernel
    emb = np.roll(emb, shift=(-((kh - 1) // 2), -((kw - 1) // 2)), axis=(0, 1))
    return _fft.fft2(emb)


@dataclass(frozen=True, eq=False)
class Circulant:
    """Periodic convolution with a centered 2D kernel (odd side lengths)."""

    kernel: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.ascontiguousarray(self.kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise OperatorError(f"kernel must be 2D with odd side lengths, got {k.shape}")
        if not np.isfinite(k).all():
            raise OperatorError("kernel contains non-finite entries")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "_fft_cache", {})
        object.__setattr__(self, "_lock", threading.Lock())

    def kernel_fft(self, height: int, width: int) -> np.ndarray:
        """Cached kernel transform on the (height, width) grid."""
        key = (height, width)
        cache = self._fft_cache
        if key not in cache:
            with self._lock:
                if key not in cache:
                    cache[key] = _embed_kernel_fft(self.kernel, height, width)
        return cache[key]

    def out_shape(self, shape):
        return tuple(shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        khat = self.kernel_fft(x.shape[0], x.shape[1])
        return _fft.ifft2(_fft.fft2(x, axes=(0, 1)) * khat[:, :, None], axes=(0, 1)).real

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        khat = self.kernel_fft(y.shape[0], y.shape[1])
        return _fft.ifft2(
            _fft.fft2(y, axes=(0, 1)) * np.conj(khat)[:, :, None], axes=(0, 1)
        ).real


@dataclass(frozen=True, eq=False)
class Mask:
    """Keeps the entries flagged True in an (H, W, C) boolean array."""

    keep: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.ascontiguousarray(self.keep, dtype=bool)
        if k.ndim == 2:
            k = k[:, :, None]
        if k.ndim != 3:
            raise OperatorError(f"mask must be (H, W, C) boolean, got shape {k.shape}")
        if not k.any():
            raise OperatorError("mask keeps no entries")
        object.__setattr__(self, "keep", k)

    @property
    def m(self) -> int:
        return int(self.keep.sum())

    def out_shape(self, shape):
        if tuple(shape) != self.keep.shape:
            raise OperatorError(f"mask shape {self.keep.shape} incompatible with image {shape}")
        return (self.m, 1, 1)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x[self.keep].reshape(-1, 1, 1)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self.keep.shape)
        out[self.keep] = y.ravel()
        return out


@dataclass(frozen=True, eq=False)
class Downsample:
    """Regular subsampling by factor d, keeping the top-left of each block."""

    factor: int

    def __post_init__(self):
        if self.factor < 1:
            raise OperatorError(f"downsample factor must be positive, got {self.factor}")

    def out_shape(self, shape):
        h, w, c = shape
        if h % self.factor or w % self.factor:
            raise OperatorError(f"factor {self.factor} does not divide image {h}x{w}")
        return (h // self.factor, w // self.factor, c)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x[:: self.factor, :: self.factor, :].copy()

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        h, w, c = y.shape
        out = np.zeros((h * self.factor, w * self.factor, c))
        out[:: self.factor, :: self.factor, :] = y
        return out


@dataclass(frozen=True, eq=False)
class BlurThenDownsample:
    """A = S B: periodic blur followed by regular subsampling."""

    kernel: np.ndarray = field(repr=False)
    factor: int

    def __post_init__(self):
        object.__setattr__(self, "blur", Circulant(self.kernel))
        object.__setattr__(self, "sub", Downsample(self.factor))
        object.__setattr__(self, "kernel", self.blur.kernel)

    def out_shape(self, shape):
        return self.sub.out_shape(self.blur.out_shape(shape))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.sub.apply(self.blur.apply(x))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.blur.adjoint(self.sub.adjoint(y))


DegradationOp = Circulant | Mask | Downsample | BlurThenDownsample


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive white Gaussian measurement noise of standard deviation sigma."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise OperatorError(f"sigma must be a positive finite real, got {self.sigma}")


def _check_in_shape(op: DegradationOp, x: ImageField) -> None:
    # out_shape validates divisibility / mask shape as a side effect
    op.out_shape(x.shape)


def apply_op(op: DegradationOp, x: ImageField) -> ImageField:
    """Forward map A x."""
    _check_in_shape(op, x)
    return ImageField(op.apply(x.data))


def adjoint_op(op: DegradationOp, y: ImageField) -> ImageField:
    """Adjoint map A^T y (zero-filling scattered entries where needed)."""
    if isinstance(op, Mask):
        if y.size != op.m:
            raise OperatorError(f"adjoint input has {y.size} entries, mask keeps {op.m}")
    return ImageField(op.adjoint(y.data))


def degrade(x: ImageField, op: DegradationOp, noise: NoiseModel, rng: RngStream) -> ImageField:
    """Simulate a measurement y = A x + sigma * w with standard Gaussian w."""
    ax = apply_op(op, x)
    w = rng.standard_normal(ax.shape)
    return ImageField(ax.data + noise.sigma * w)


def sigma_from_snr(reference: ImageField, op: DegradationOp, snr_db: float) -> float:
    """Noise level sigma achieving a target SNR on the degraded signal.

    The convention is a power ratio on A(reference):
    ``10 log10(||A r||^2 / (m sigma^2)) = snr_db`` with m the output
    dimension, i.e. the per-sample noise power is measured against the
    per-sample power of the clean degraded signal.
    """
    ax = apply_op(op, reference)
    energy = float(np.sum(ax.data**2))
    if energy == 0.0:
        raise OperatorError("reference has zero energy under the operator; SNR undefined")
    m = ax.size
    return float(np.sqrt(energy / (m * 10.0 ** (snr_db / 10.0))))


def random_mask(height: int, width: int, channels: int, keep_fraction: float, rng: RngStream) -> Mask:
    """Seeded uniform pixel selection without replacement, per channel."""
    if not 0.0 < keep_fraction <= 1.0:
        raise OperatorError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n = height * width
    n_keep = max(1, int(round(keep_fraction * n)))
    keep = np.zeros((height, width, channels), dtype=bool)
    for c in range(channels):
        chosen = rng.permutation(n)[:n_keep]
        flat = np.zeros(n, dtype=bool)
        flat[chosen] = True
        keep[:, :, c] = flat.reshape(height, width)
    return Mask(keep)


def dense_matrix(op: DegradationOp, shape, max_n: int = 4096) -> np.ndarray:
    """Dense (m, n) matrix of the operator on a given image shape.

    Intended for the exact small-scale oracles; guarded to n <= ``max_n``.
    """
    h, w, c = shape
    n = h * w * c
    if n > max_n:
        raise OperatorError(f"dense assembly guarded to n <= {max_n}, got n = {n}")
    out_shape = op.out_shape(shape)
    m = int(np.prod(out_shape))
    mat = np.empty((m, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        mat[:, j] = op.apply(basis.reshape(shape)).ravel()
        basis[j] = 0.0
    return mat
