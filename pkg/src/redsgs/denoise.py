"""Denoisers, the residual-gradient prior potential, and its compliance verifier.

The prior potential used throughout is the image-adaptive quadratic form

    g(x) = 0.5 * <x, x - D(x)>,

whose gradient is the denoising residual x - D(x) whenever the denoiser D
is locally homogeneous with a symmetric Jacobian. Two exactly linear
built-in denoisers are provided so that every downstream guarantee can be
checked against closed forms:

* ``SymmetricConv`` -- x -> (1 - eps0) * (k * x) with a symmetric,
  nonnegative, sum-one kernel and periodic boundaries. The (1 - eps0)
  shrink makes the map strictly contractive: a sum-one kernel has DC gain
  exactly 1, which would break strong convexity of g along the DC mode.
* ``TransformShrink`` -- x -> U^T diag(s) U x with U the orthonormal 2D
  DCT and per-frequency gains s in [0, 1].

``Plugin`` wraps an external executable speaking a one-frame stdin/stdout
protocol, so learned denoisers can be plugged in without this package
depending on them.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.fft import dctn, idctn

from .images import ImageField, read_rfi1, rfi1_bytes
from .operators import Circulant, OperatorError
from .rng import RngStream

__all__ = [
    "Denoiser",
    "SymmetricConv",
    "TransformShrink",
    "Plugin",
    "DenoiserError",
    "RedConditionReport",
    "denoise_apply",
    "red_potential",
    "red_gradient",
    "fd_jacobian",
    "verify_red_conditions",
    "dct_lowpass_gains",
    "dense_denoiser_matrix",
]

DENSE_GUARD_N = 4096


class DenoiserError(RuntimeError):
    """Denoiser failure: plugin crash, protocol violation, non-finite output."""


@dataclass(frozen=True, eq=False)
class SymmetricConv:
    """Shrunk periodic convolution: D(x) = (1 - eps0) * (kernel * x).

    The kernel must be point-symmetric, nonnegative and sum to one, so the
    Jacobian is a symmetric circulant matrix with eigenvalues in
    [-(1 - eps0), 1 - eps0].
    """

    kernel: np.ndarray = field(repr=False)
    eps0: float = 0.05

    def __post_init__(self):
        conv = Circulant(self.kernel)
        k = conv.kernel
        if not (0.0 < self.eps0 < 1.0):
            raise OperatorError(f"eps0 must lie in (0, 1), got {self.eps0}")
        if (k < 0).any():
            raise OperatorError("kernel must be nonnegative")
        if abs(k.sum() - 1.0) > 1e-12:
            raise OperatorError(f"kernel must sum to 1, got {k.sum()!r}")
        if np.abs(k - k[::-1, ::-1]).max() > 1e-12:
            raise OperatorError("kernel must be point-symmetric")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "_conv", conv)

    @property
    def linear(self) -> bool:
        return True

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (1.0 - self.eps0) * self._conv.apply(x)

    def jacobian_spectrum(self, height: int, width: int) -> np.ndarray:
        """Eigenvalues of the Jacobian on an (height, width) grid."""
        khat = self._conv.kernel_fft(height, width)
        return (1.0 - self.eps0) * khat.real.ravel()

    def hessian_bounds(self, height: int, width: int) -> tuple[float, float]:
        """(m_g, M_g): eigenvalue range of I - Jacobian on the given grid."""
        spec = self.jacobian_spectrum(height, width)
        return 1.0 - float(spec.max()), 1.0 - float(spec.min())


@dataclass(frozen=True, eq=False)
class TransformShrink:
    """Per-frequency shrinkage in the orthonormal 2D DCT basis.

    ``gains`` has the image's (H, W) shape and acts channel-wise; the
    Jacobian is U^T diag(gains) U, symmetric with spectral radius
    max(gains). Gains may reach 1.0 (useful for fixed-point tests); the
    factory :func:`dct_lowpass_gains` caps them at 1 - eps0 so the prior
    potential stays strongly convex.
    """

    gains: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.ascontiguousarray(self.gains, dtype=np.float64)
        if g.ndim != 2:
            raise OperatorError(f"gains must be a 2D per-frequency array, got shape {g.shape}")
        if not np.isfinite(g).all() or g.min() < 0.0 or g.max() > 1.0:
            raise OperatorError("gains must be finite and lie in [0, 1]")
        object.__setattr__(self, "gains", g)

    @property
    def linear(self) -> bool:
        return True

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape[:2] != self.gains.shape:
            raise OperatorError(
                f"gains shaped {self.gains.shape} cannot denoise image {x.shape}"
            )
        coeff = dctn(x, axes=(0, 1), norm="ortho")
        return idctn(coeff * self.gains[:, :, None], axes=(0, 1), norm="ortho")

    def jacobian_spectrum(self, height: int, width: int) -> np.ndarray:
        if (height, width) != self.gains.shape:
            raise OperatorError("spectrum requested on a grid the gains were not built for")
        return self.gains.ravel().copy()

    def hessian_bounds(self, height: int, width: int) -> tuple[float, float]:
        spec = self.jacobian_spectrum(height, width)
        return 1.0 - float(spec.max()), 1.0 - float(spec.min())


def dct_lowpass_gains(height: int, width: int, strength: float, eps0: float = 0.05) -> np.ndarray:
    """Low-pass gain profile (1 - eps0) * exp(-strength * |omega|^2).

    ``strength`` >= 0 plays the role of the denoising strength: larger
    values suppress high DCT frequencies harder.
    """
    if strength < 0:
        raise OperatorError(f"strength must be nonnegative, got {strength}")
    if not (0.0 < eps0 < 1.0):
        raise OperatorError(f"eps0 must lie in (0, 1), got {eps0}")
    fy = np.arange(height) / height
    fx = np.arange(width) / width
    om2 = fy[:, None] ** 2 + fx[None, :] ** 2
    return (1.0 - eps0) * np.exp(-strength * om2)


@dataclass(frozen=True, eq=False)
class Plugin:
    """External denoiser executable speaking the one-frame RFI1 protocol.

    Per call the parent writes one RFI1 frame followed by the ASCII line
    ``nu=<value>\\n`` to the child's standard input; the child must answer
    with one RFI1 frame of identical shape on standard output and exit 0.
    Anything else (nonzero exit, malformed frame, wrong shape, non-finite
    values) raises :class:`DenoiserError` carrying the child's stderr.
    """

    command: tuple[str, ...]
    nu: float = 0.0
    timeout: float = 120.0

    def __post_init__(self):
        cmd = (self.command,) if isinstance(self.command, str) else tuple(self.command)
        if not cmd:
            raise OperatorError("plugin command must not be empty")
        object.__setattr__(self, "command", cmd)

    @property
    def linear(self) -> bool:
        return False

    def apply(self, x: np.ndarray) -> np.ndarray:
        payload = rfi1_bytes(ImageField(x)) + f"nu={self.nu!r}\n".encode("ascii")
        try:
            proc = subprocess.run(
                list(self.command),
                input=payload,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise DenoiserError(f"plugin {self.command[0]} failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise DenoiserError(
                f"plugin {self.command[0]} exited {proc.returncode}; "
                f"stderr: {proc.stderr.decode(errors='replace')[:500]}"
            )
        try:
            import io

            out = read_rfi1(io.BytesIO(proc.stdout))
        except Exception as exc:
            raise DenoiserError(
                f"plugin {self.command[0]} wrote a malformed frame: {exc}; "
                f"stderr: {proc.stderr.decode(errors='replace')[:500]}"
            ) from exc
        if out.shape != x.shape:
            raise DenoiserError(
                f"plugin returned shape {out.shape}, expected {x.shape}"
            )
        return out.data


Denoiser = SymmetricConv | TransformShrink | Plugin


def denoise_apply(d: Denoiser, x: ImageField) -> ImageField:
    """Apply the denoiser; output shape matches the input."""
    out = d.apply(x.data)
    if not np.isfinite(out).all():
        raise DenoiserError("denoiser produced non-finite output")
    return ImageField(out)


def red_potential(d: Denoiser, x: ImageField) -> float:
    """The prior potential 0.5 * <x, x - D(x)>."""
    dx = denoise_apply(d, x)
    return 0.5 * float(np.vdot(x.data, x.data - dx.data))


def red_gradient(d: Denoiser, x: ImageField) -> ImageField:
    """The denoising residual x - D(x) (the gradient of the potential)."""
    dx = denoise_apply(d, x)
    return ImageField(x.data - dx.data)


def default_probe_eps(x: np.ndarray) -> float:
    # balances truncation vs rounding for float64 central differences
    return 1e-4 * (1.0 + float(np.abs(x).max()))


def fd_jacobian(d: Denoiser, x: ImageField, eps: float | None = None) -> np.ndarray:
    """Dense central-difference Jacobian of the denoiser at x.

    Column j is probed with the j-th basis vector:
    (D(x + eps e_j) - D(x - eps e_j)) / (2 eps). Guarded to n <= 4096.
    """
    n = x.size
    if n > DENSE_GUARD_N:
        raise OperatorError(f"dense Jacobian guarded to n <= {DENSE_GUARD_N}, got n = {n}")
    if eps is None:
        eps = default_probe_eps(x.data)
    if not eps > 0:
        raise OperatorError(f"probe eps must be positive, got {eps}")
    base = x.data
    jac = np.empty((n, n))
    probe = np.zeros_like(base)
    flat = probe.reshape(-1)
    for j in range(n):
        flat[j] = eps
        plus = denoise_apply(d, ImageField(base + probe)).data
        minus = denoise_apply(d, ImageField(base - probe)).data
        jac[:, j] = (plus - minus).ravel() / (2.0 * eps)
        flat[j] = 0.0
    return jac


@dataclass(frozen=True)
class RedConditionReport:
    """Compliance metrics for the residual-gradient prior conditions.

    nmse_lh1 : homogeneity, D((1+e)x) vs (1+e)D(x)
    nmse_lh2 : directional-derivative identity, J(x) x vs D(x)
    nmse_js  : Jacobian symmetry, ||J - J^T||_F^2 / ||J||_F^2
    msr      : mean spectral radius of J (power iteration)
    """

    nmse_lh1: float
    nmse_lh2: float
    nmse_js: float
    msr: float
    patch_count: int
    probe_epsilon: float

    def __post_init__(self):
        vals = (self.nmse_lh1, self.nmse_lh2, self.nmse_js, self.msr)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"report fields must be nonnegative finite, got {vals}")


def _power_iteration(mat: np.ndarray, iters: int = 50, rtol: float = 1e-8) -> float:
    n = mat.shape[0]
    # fixed deterministic start vector (seeded, independent of caller RNG)
    v = RngStream(0x5EED_0001).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = mat @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - est) <= rtol * max(nw, 1.0):
            return nw
        est = nw
    return est


def verify_red_conditions(
    d: Denoiser, patches: Sequence[ImageField], eps: float | None = None
) -> RedConditionReport:
    """Evaluate the four compliance metrics averaged over a patch set.

    Patches where D(x) = 0 (vanishing denominators) are skipped; if every
    patch degenerates a :class:`DenoiserError` is raised.
    """
    if len(patches) == 0:
        raise ValueError("patch set must be nonempty")
    if eps is None:
        eps = 1e-4 * (1.0 + max(float(np.abs(p.data).max()) for p in patches))
    lh1, lh2, js, msr = [], [], [], []
    homo_scale = 1e-3
    for patch in patches:
        x = patch.data
        dx = denoise_apply(d, patch).data
        denom = float(np.sum(dx**2))
        if denom == 0.0:
            continue
        scaled = denoise_apply(d, ImageField((1.0 + homo_scale) * x)).data
        ref = (1.0 + homo_scale) * dx
        lh1.append(float(np.sum((scaled - ref) ** 2) / np.sum(ref**2)))
        jac = fd_jacobian(d, patch, eps)
        jx = jac @ x.ravel()
        lh2.append(float(np.sum((jx - dx.ravel()) ** 2) / denom))
        jnorm = float(np.sum(jac**2))
        if jnorm == 0.0:
            continue
        js.append(float(np.sum((jac - jac.T) ** 2) / jnorm))
        msr.append(_power_iteration(jac))
    if not msr:
        raise DenoiserError("all patches degenerate (D(x) = 0 everywhere)")
    return RedConditionReport(
        nmse_lh1=float(np.mean(lh1)),
        nmse_lh2=float(np.mean(lh2)),
        nmse_js=float(np.mean(js)),
        msr=float(np.mean(msr)),
        patch_count=len(msr),
        probe_epsilon=float(eps),
    )


def dense_denoiser_matrix(d: Denoiser, shape, max_n: int = DENSE_GUARD_N) -> np.ndarray:
    """Dense matrix of a linear denoiser by probing basis vectors."""
    h, w, c = shape
    n = h * w * c
    if n > max_n:
        raise OperatorError(f"dense assembly guarded to n <= {max_n}, got n = {n}")
    mat = np.empty((n, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        mat[:, j] = d.apply(basis.reshape(shape)).ravel()
        basis[j] = 0.0
    return mat
