"""Posterior samplers: the Langevin-within-split-Gibbs scheme and ULA baselines.

The split sampler targets the augmented model obtained by tethering an
auxiliary variable z to the image x with a Gaussian coupling of variance
rho2. Each sweep

1. moves z by one Euler-Maruyama (Langevin) step on the conditional
   -log p(z | x) = beta g(z) + ||x - z||^2 / (2 rho2), using the residual
   gradient g'(z) = z - D(z):

       z+ = (1 - gamma beta - gamma/rho2) z + gamma beta D(z)
            + (gamma/rho2) x + sqrt(2 gamma) eps,

2. draws x exactly from the Gaussian conditional N(mu(z+), Q^-1) with
   Q = A^T A / sigma^2 + I/rho2 and
   mu(z) = Q^-1 (A^T y / sigma^2 + z / rho2).

Note the z-step coefficients: every drift term carries a factor gamma, as
an Euler-Maruyama discretization of the conditional's Langevin diffusion
must. Q is factorized once per run: diagonally for masks, per Fourier
frequency for periodic blurs; super-resolution (blur-then-subsample)
operators go through the dedicated triple-split sweep instead.

The ULA baselines (`run_red_ula`, `run_pnp_ula`) discretize the Langevin
diffusion on the un-augmented posterior directly; the PnP variant adds the
optional box-projection drift (gamma/lambda)(clip(x) - x) and reports how
often the projection actually fires.

All samplers are seed-deterministic, stream their posterior moments in a
single pass, and abort loudly (with the iteration index) if any state
entry becomes non-finite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as _fft

from .denoise import Denoiser, denoise_apply
from .images import ImageField
from .operators import (
    BlurThenDownsample,
    Circulant,
    DegradationOp,
    Downsample,
    Mask,
    OperatorError,
    adjoint_op,
)
from .rng import RngStream

__all__ = [
    "SamplerConfig",
    "ChainState",
    "ChainSummary",
    "ConfigError",
    "DivergenceError",
    "DiagonalSolver",
    "FourierDiagonalSolver",
    "ConditionalGaussianSolver",
    "conditional_mu_Q",
    "sample_x_cond",
    "lmc_z_step",
    "run_lwsgs",
    "run_red_ula",
    "run_pnp_ula",
    "run_sr_split",
    "run_lwsgs_coupled",
    "max_step_size",
    "log_nu_schedule",
]


class ConfigError(ValueError):
    """Sampler configuration violates a precondition."""


class DivergenceError(RuntimeError):
    """A chain state went non-finite; carries the offending iteration."""

    def __init__(self, iteration: int, what: str = "state"):
        self.iteration = iteration
        self.what = what
        msg = (f"non-finite {what} at iteration {iteration}; aborting chain"
               if iteration >= 0 else f"non-finite {what}; aborting")
        super().__init__(msg)


def max_step_size(beta: float, M_g: float, rho2: float, m_g: float | None = None) -> float:
    """Admissible Langevin step size for the auxiliary update.

    Default mode returns 1 / (beta M_g + 1/rho2). Passing ``m_g`` returns
    the wider two-sided bound 2 / (beta m_g + beta M_g + 1/rho2).
    """
    if min(beta, M_g, rho2) <= 0 or (m_g is not None and m_g <= 0):
        raise ConfigError("beta, M_g, rho2 (and m_g if given) must be positive")
    if m_g is None:
        return 1.0 / (beta * M_g + 1.0 / rho2)
    return 2.0 / (beta * m_g + beta * M_g + 1.0 / rho2)


@dataclass(frozen=True)
class SamplerConfig:
    """Hyperparameters shared by every sampler.

    ``gamma=None`` resolves to 0.99 times the admissible bound with the
    universal Hessian constant M_g = 2 (for the split samplers) or 0.99
    over the posterior smoothness (for the ULA family). ``rho1_2`` and
    ``rho2_2`` are only consumed by the triple-split sampler.
    """

    beta: float
    rho2: float
    sigma: float
    n_mc: int
    n_bi: int = 0
    gamma: float | None = None
    rho1_2: float | None = None
    rho2_2: float | None = None
    thin: int = 10
    seed: int = 0
    store_samples: bool = False
    track_z: bool = False

    def __post_init__(self):
        if self.beta <= 0 or self.rho2 <= 0 or self.sigma <= 0:
            raise ConfigError("beta, rho2 and sigma must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.n_mc < 1 or self.n_bi < 0 or self.n_bi >= self.n_mc:
            raise ConfigError(f"need 0 <= n_bi < n_mc, got n_bi={self.n_bi}, n_mc={self.n_mc}")
        if self.thin < 1:
            raise ConfigError(f"thin must be a positive integer, got {self.thin}")
        for name in ("rho1_2", "rho2_2"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive, got {v}")


@dataclass
class ChainState:
    """Mutable per-chain sampler state."""

    x: ImageField
    z: ImageField | None
    t: int
    rng: RngStream
    z1: ImageField | None = None
    z2: ImageField | None = None


# ---------------------------------------------------------------------------
# Gaussian conditional solvers


@dataclass(frozen=True, eq=False)
class DiagonalSolver:
    """Q = diag(q): per-entry precisions (mask likelihoods)."""

    q: np.ndarray = field(repr=False)          # (H, W, C)
    keep: np.ndarray = field(repr=False)       # data-term support
    rho2: float = 1.0

    def __post_init__(self):
        if (self.q <= 0).any():
            raise ConfigError("all precisions must be strictly positive")

    @property
    def q_inv_norm(self) -> float:
        return float(1.0 / self.q.min())

    def mu(self, data_term: np.ndarray, z: np.ndarray) -> np.ndarray:
        # masked coordinates carry no data term: their mean is exactly z
        full = (data_term + z / self.rho2) / self.q
        return np.where(self.keep, full, z)

    def perturb(self, w: np.ndarray) -> np.ndarray:
        return w / np.sqrt(self.q)


@dataclass(frozen=True, eq=False)
class FourierDiagonalSolver:
    """Q diagonal per Fourier frequency (periodic-blur likelihoods)."""

    qhat: np.ndarray = field(repr=False)       # (H, W) real positive
    rho2: float = 1.0

    def __post_init__(self):
        if (self.qhat <= 0).any():
            raise ConfigError("all frequency precisions must be strictly positive")

    @property
    def q_inv_norm(self) -> float:
        return float(1.0 / self.qhat.min())

    def mu(self, data_term: np.ndarray, z: np.ndarray) -> np.ndarray:
        rhs = data_term + z / self.rho2
        return _fft.ifft2(
            _fft.fft2(rhs, axes=(0, 1)) / self.qhat[:, :, None], axes=(0, 1)
        ).real

    def perturb(self, w: np.ndarray) -> np.ndarray:
        # C = F^-1 diag(qhat^-1/2) F is real symmetric with C C^T = Q^-1
        return _fft.ifft2(
            _fft.fft2(w, axes=(0, 1)) / np.sqrt(self.qhat)[:, :, None], axes=(0, 1)
        ).real


ConditionalGaussianSolver = DiagonalSolver | FourierDiagonalSolver


def build_solver(op: DegradationOp, shape, sigma: float, rho2: float) -> ConditionalGaussianSolver:
    """Factorize Q = A^T A / sigma^2 + I / rho2 for a mask or periodic blur."""
    if sigma <= 0 or rho2 <= 0:
        raise ConfigError("sigma and rho2 must be positive")
    h, w, c = shape
    if isinstance(op, Mask):
        if op.keep.shape != tuple(shape):
            raise OperatorError(f"mask shape {op.keep.shape} incompatible with image {shape}")
        q = np.where(op.keep, 1.0 / sigma**2 + 1.0 / rho2, 1.0 / rho2)
        return DiagonalSolver(q=q, keep=op.keep, rho2=rho2)
    if isinstance(op, Circulant):
        khat = op.kernel_fft(h, w)
        qhat = np.abs(khat) ** 2 / sigma**2 + 1.0 / rho2
        return FourierDiagonalSolver(qhat=qhat, rho2=rho2)
    raise ConfigError(
        f"{type(op).__name__} has no direct conditional factorization; "
        "blur-then-subsample operators go through run_sr_split"
    )


def conditional_mu_Q(z: ImageField, y: ImageField, op: DegradationOp, sigma: float,
                     rho2: float) -> tuple[ImageField, ConditionalGaussianSolver]:
    """Mean mu(z) = Q^-1 (A^T y / sigma^2 + z / rho2) and the Q factorization."""
    solver = build_solver(op, z.shape, sigma, rho2)
    data_term = adjoint_op(op, y).data / sigma**2
    return ImageField(solver.mu(data_term, z.data)), solver


def sample_x_cond(mu: ImageField, solver: ConditionalGaussianSolver, rng) -> ImageField:
    """One exact draw from N(mu, Q^-1)."""
    w = rng.standard_normal(mu.shape)
    out = mu.data + solver.perturb(np.asarray(w))
    if not np.isfinite(out).all():
        raise DivergenceError(-1, "conditional draw")
    return ImageField(out)


# ---------------------------------------------------------------------------
# Langevin pieces


def lmc_z_step(z: ImageField, x: ImageField, d: Denoiser, beta: float, rho2: float,
               gamma: float, rng) -> ImageField:
    """One Euler-Maruyama step on -log p(z | x) using the residual gradient.

    gamma = 0 is tolerated (the step degenerates to the identity); sampler
    configs require gamma > 0.
    """
    if gamma < 0 or beta <= 0 or rho2 <= 0:
        raise ConfigError("need gamma >= 0, beta > 0, rho2 > 0")
    dz = denoise_apply(d, z).data
    w = np.asarray(rng.standard_normal(z.shape))
    out = (
        (1.0 - gamma * beta - gamma / rho2) * z.data
        + (gamma * beta) * dz
        + (gamma / rho2) * x.data
        + np.sqrt(2.0 * gamma) * w
    )
    if not np.isfinite(out).all():
        raise DivergenceError(-1, "auxiliary update")
    return ImageField(out)


def log_nu_schedule(nu_start: float, nu_end: float, n_bi: int, n_mc: int) -> np.ndarray:
    """Log-spaced decreasing strength schedule, frozen after burn-in."""
    if nu_start <= 0 or nu_end <= 0 or nu_start < nu_end:
        raise ConfigError("need nu_start >= nu_end > 0")
    if n_bi < 1:
        raise ConfigError("schedule needs n_bi >= 1")
    ramp = np.geomspace(nu_start, nu_end, n_bi)
    return np.concatenate([ramp, np.full(max(n_mc - n_bi, 0), nu_end)])


# ---------------------------------------------------------------------------
# Streaming statistics


class _RunningMoments:
    """Single-pass mean and sum of squared deviations (Welford), mergeable."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def update(self, value: np.ndarray) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def merge(self, other: "_RunningMoments") -> "_RunningMoments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        merged = _RunningMoments(self.mean.shape)
        merged.count = self.count + other.count
        delta = other.mean - self.mean
        merged.mean = self.mean + delta * (other.count / merged.count)
        merged.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / merged.count)
        return merged

    def variance(self) -> np.ndarray:
        if self.count == 0:
            raise ConfigError("no samples accumulated")
        return self.m2 / self.count


@dataclass
class ChainSummary:
    """Streamed posterior statistics of one chain (or a merge of chains)."""

    mean_x: ImageField
    var_x: ImageField
    iterations: int
    kept_samples: int
    wall_seconds: float
    gamma_used: float
    gamma_bound: float | None
    gamma_verified: bool
    probe_indices: np.ndarray | None = None
    traces: np.ndarray | None = None            # (n_probes, kept_samples)
    samples: list[ImageField] | None = None     # thinned, post-burn-in
    mean_z: ImageField | None = None
    var_z: ImageField | None = None
    projection_fraction: float | None = None
    _moments_x: "_RunningMoments | None" = None
    _moments_z: "_RunningMoments | None" = None

    def merge(self, other: "ChainSummary") -> "ChainSummary":
        """Pool statistics with another chain (associative, order-insensitive
        up to float rounding); traces/probes are kept from ``self``."""
        if self._moments_x is None or other._moments_x is None:
            raise ConfigError("summaries lost their accumulators; cannot merge")
        mx = self._moments_x.merge(other._moments_x)
        mz = None
        if self._moments_z is not None and other._moments_z is not None:
            mz = self._moments_z.merge(other._moments_z)
        samples = None
        if self.samples is not None or other.samples is not None:
            samples = list(self.samples or []) + list(other.samples or [])
        return ChainSummary(
            mean_x=ImageField(mx.mean.copy()),
            var_x=ImageField(mx.variance()),
            iterations=self.iterations + other.iterations,
            kept_samples=mx.count,
            wall_seconds=max(self.wall_seconds, other.wall_seconds),
            gamma_used=self.gamma_used,
            gamma_bound=self.gamma_bound,
            gamma_verified=self.gamma_verified and other.gamma_verified,
            probe_indices=self.probe_indices,
            traces=self.traces,
            samples=samples,
            mean_z=None if mz is None else ImageField(mz.mean.copy()),
            var_z=None if mz is None else ImageField(mz.variance()),
            projection_fraction=self.projection_fraction,
            _moments_x=mx,
            _moments_z=mz,
        )


def _resolve_probes(probe, shape, seed: int) -> np.ndarray:
    n = int(np.prod(shape))
    if probe is None or probe == "none":
        return np.empty(0, dtype=np.int64)
    if probe == "all":
        return np.arange(n, dtype=np.int64)
    if probe == "auto":
        if n <= 1024:
            return np.arange(n, dtype=np.int64)
        sub = RngStream(seed, stream=0x9B0BE).permutation(n)[:256]
        return np.sort(sub).astype(np.int64)
    idx = np.asarray(list(probe), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ConfigError(f"probe indices out of range [0, {n})")
    return idx


def _normalized_adjoint_init(y: ImageField, op: DegradationOp) -> ImageField:
    """Data-driven start: A^T y rescaled to [0, 1]."""
    v = adjoint_op(op, y).data
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        return ImageField(np.clip(v, 0.0, 1.0))
    return ImageField((v - lo) / (hi - lo))


def _check_finite(arr: np.ndarray, t: int, what: str) -> None:
    if not np.isfinite(arr).all():
        raise DivergenceError(t, what)


def _operator_gram_norm(op: DegradationOp, shape) -> float:
    """Upper bound on ||A^T A|| from the operator structure."""
    h, w, _ = shape
    if isinstance(op, Circulant):
        return float((np.abs(op.kernel_fft(h, w)) ** 2).max())
    if isinstance(op, (Mask, Downsample)):
        return 1.0
    if isinstance(op, BlurThenDownsample):
        return float((np.abs(op.blur.kernel_fft(h, w)) ** 2).max())
    raise ConfigError(f"unknown operator {type(op).__name__}")


def _hessian_bounds(d: Denoiser, shape) -> tuple[float, float] | None:
    if getattr(d, "linear", False) and hasattr(d, "hessian_bounds"):
        return d.hessian_bounds(shape[0], shape[1])
    return None


class _TraceRecorder:
    def __init__(self, probe_idx: np.ndarray, n_kept: int):
        self.idx = probe_idx
        self.buf = np.empty((probe_idx.size, n_kept)) if probe_idx.size else None
        self.col = 0

    def record(self, x: np.ndarray) -> None:
        if self.buf is not None:
            self.buf[:, self.col] = x.ravel()[self.idx]
        self.col += 1


def _summarize(mx, mz, recorder, samples, iterations, wall, gamma, bound, verified,
               probe_idx, projection_fraction=None) -> ChainSummary:
    return ChainSummary(
        mean_x=ImageField(mx.mean.copy()),
        var_x=ImageField(mx.variance()),
        iterations=iterations,
        kept_samples=mx.count,
        wall_seconds=wall,
        gamma_used=gamma,
        gamma_bound=bound,
        gamma_verified=verified,
        probe_indices=probe_idx if probe_idx.size else None,
        traces=recorder.buf,
        samples=samples,
        mean_z=None if mz is None else ImageField(mz.mean.copy()),
        var_z=None if mz is None else ImageField(mz.variance()),
        projection_fraction=projection_fraction,
        _moments_x=mx,
        _moments_z=mz,
    )


def _resolve_gamma_split(cfg: SamplerConfig, d: Denoiser, shape, rho2: float) -> tuple[float, float | None, bool]:
    """(gamma, bound, verified) for the split samplers' auxiliary step."""
    bounds = _hessian_bounds(d, shape)
    gamma = cfg.gamma
    if gamma is None:
        # universal residual-gradient Hessian bound M_g = 2
        gamma = 0.99 * max_step_size(cfg.beta, 2.0, rho2)
    if bounds is None:
        return gamma, None, False
    _, M_g = bounds
    bound = max_step_size(cfg.beta, M_g, rho2)
    if gamma > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"gamma = {gamma!r} exceeds the admissible step bound {bound!r} "
            f"(beta = {cfg.beta!r}, M_g = {M_g!r}, rho2 = {rho2!r})"
        )
    return gamma, bound, True


def _resolve_gamma_ula(cfg: SamplerConfig, d: Denoiser, op: DegradationOp, shape) -> tuple[float, float | None, bool]:
    """(gamma, bound, verified) for the ULA family.

    The relevant smoothness here is the full posterior's:
    L = ||A^T A|| / sigma^2 + beta M_g; the drift stays contractive for
    gamma < 2/L, and the default step is 0.99/L.
    """
    gram = _operator_gram_norm(op, shape)
    bounds = _hessian_bounds(d, shape)
    if bounds is None:
        gamma = cfg.gamma
        if gamma is None:
            gamma = 0.99 / (gram / cfg.sigma**2 + cfg.beta * 2.0)
        return gamma, None, False
    _, M_g = bounds
    L = gram / cfg.sigma**2 + cfg.beta * M_g
    gamma = cfg.gamma if cfg.gamma is not None else 0.99 / L
    bound = 2.0 / L
    if gamma > bound * (1.0 + 1e-12):
        raise ConfigError(
            f"gamma = {gamma!r} exceeds the ULA stability bound {bound!r} "
            f"(posterior smoothness L = {L!r})"
        )
    return gamma, bound, True


# ---------------------------------------------------------------------------
# Samplers


def run_lwsgs(cfg: SamplerConfig, y: ImageField, op: DegradationOp, d: Denoiser,
              probe="auto", chain_index: int = 0,
              denoiser_schedule: Callable[[int], Denoiser] | None = None,
              rng=None) -> ChainSummary:
    """Langevin-within-split-Gibbs chain targeting the regularized posterior.

    Initializes x = z = A^T y rescaled to [0, 1], then alternates the
    auxiliary Langevin step and the exact Gaussian conditional draw for
    ``cfg.n_mc`` sweeps. Returns streamed mean/variance over post-burn-in
    x samples plus optional thinned samples and per-pixel probe traces.
    """
    start = time.perf_counter()
    x = _normalized_adjoint_init(y, op)
    shape = x.shape
    gamma, bound, verified = _resolve_gamma_split(cfg, d, shape, cfg.rho2)
    solver = build_solver(op, shape, cfg.sigma, cfg.rho2)
    data_term = adjoint_op(op, y).data / cfg.sigma**2
    if rng is None:
        rng = RngStream(cfg.seed, stream=chain_index)

    state = ChainState(x=x, z=x, t=0, rng=rng)
    n_kept = cfg.n_mc - cfg.n_bi
    probe_idx = _resolve_probes(probe, shape, cfg.seed)
    recorder = _TraceRecorder(probe_idx, n_kept)
    mx = _RunningMoments(shape)
    mz = _RunningMoments(shape) if cfg.track_z else None
    samples: list[ImageField] | None = [] if cfg.store_samples else None

    for t in range(cfg.n_mc):
        dnz = denoiser_schedule(t) if denoiser_schedule is not None else d
        try:
            state.z = lmc_z_step(state.z, state.x, dnz, cfg.beta, cfg.rho2, gamma, rng)
            _check_finite(state.z.data, t, "z")
            mu = solver.mu(data_term, state.z.data)
            state.x = sample_x_cond(ImageField(mu), solver, rng)
            _check_finite(state.x.data, t, "x")
        except DivergenceError as exc:
            raise DivergenceError(t, exc.what) from None
        state.t = t + 1
        if t >= cfg.n_bi:
            mx.update(state.x.data)
            if mz is not None:
                mz.update(state.z.data)
            recorder.record(state.x.data)
            if samples is not None and (t - cfg.n_bi) % cfg.thin == 0:
                samples.append(state.x)
    wall = time.perf_counter() - start
    return _summarize(mx, mz, recorder, samples, cfg.n_mc, wall, gamma, bound,
                      verified, probe_idx)


def run_lwsgs_coupled(cfg: SamplerConfig, y: ImageField, op: DegradationOp, d: Denoiser,
                      init_a: tuple[ImageField, ImageField],
                      init_b: tuple[ImageField, ImageField]) -> dict[str, np.ndarray]:
    """Two split-Gibbs chains driven by shared Gaussian variates.

    Returns per-sweep distance arrays {"z": ||z - z~||, "x": ||x - x~||},
    used to check the geometric coupling contraction.
    """
    x_a, z_a = init_a
    x_b, z_b = init_b
    shape = x_a.shape
    gamma, _, _ = _resolve_gamma_split(cfg, d, shape, cfg.rho2)
    solver = build_solver(op, shape, cfg.sigma, cfg.rho2)
    data_term = adjoint_op(op, y).data / cfg.sigma**2
    rng = RngStream(cfg.seed, stream=0)

    dz = np.empty(cfg.n_mc)
    dx = np.empty(cfg.n_mc)
    for t in range(cfg.n_mc):
        eps = np.asarray(rng.standard_normal(shape))
        za = _lmc_with_noise(z_a, x_a, d, cfg.beta, cfg.rho2, gamma, eps)
        zb = _lmc_with_noise(z_b, x_b, d, cfg.beta, cfg.rho2, gamma, eps)
        xi = np.asarray(rng.standard_normal(shape))
        xa = ImageField(solver.mu(data_term, za.data) + solver.perturb(xi))
        xb = ImageField(solver.mu(data_term, zb.data) + solver.perturb(xi))
        z_a, z_b, x_a, x_b = za, zb, xa, xb
        dz[t] = float(np.linalg.norm(z_a.data - z_b.data))
        dx[t] = float(np.linalg.norm(x_a.data - x_b.data))
    return {"z": dz, "x": dx}


def _lmc_with_noise(z: ImageField, x: ImageField, d: Denoiser, beta, rho2, gamma,
                    eps: np.ndarray) -> ImageField:
    dz = denoise_apply(d, z).data
    out = (
        (1.0 - gamma * beta - gamma / rho2) * z.data
        + (gamma * beta) * dz
        + (gamma / rho2) * x.data
        + np.sqrt(2.0 * gamma) * eps
    )
    return ImageField(out)


def _run_ula(cfg: SamplerConfig, y: ImageField, op: DegradationOp, d: Denoiser,
             probe, chain_index: int, box: tuple[float, float] | None,
             lam: float | None, rng=None) -> ChainSummary:
    if not isinstance(op, (Mask, Circulant)):
        raise ConfigError("ULA runs need a mask or periodic-blur operator")
    if box is not None:
        lo, hi = box
        if not lo < hi:
            raise ConfigError(f"box must satisfy lo < hi, got {box}")
    if lam is not None and lam <= 0:
        raise ConfigError(f"lambda must be positive or disabled, got {lam}")
    start = time.perf_counter()
    x = _normalized_adjoint_init(y, op)
    shape = x.shape
    gamma, bound, verified = _resolve_gamma_ula(cfg, d, op, shape)
    if rng is None:
        rng = RngStream(cfg.seed, stream=chain_index)
    aty = adjoint_op(op, y).data

    n_kept = cfg.n_mc - cfg.n_bi
    probe_idx = _resolve_probes(probe, shape, cfg.seed)
    recorder = _TraceRecorder(probe_idx, n_kept)
    mx = _RunningMoments(shape)
    samples: list[ImageField] | None = [] if cfg.store_samples else None
    sqrt2g = np.sqrt(2.0 * gamma)
    inv_s2 = 1.0 / cfg.sigma**2
    projected = 0

    state = ChainState(x=x, z=None, t=0, rng=rng)
    for t in range(cfg.n_mc):
        xd = state.x.data
        grad_f = inv_s2 * (op.adjoint(op.apply(xd)) - aty)
        resid = denoise_apply(d, state.x).data - xd
        w = np.asarray(rng.standard_normal(shape))
        new = xd - gamma * grad_f + gamma * cfg.beta * resid + sqrt2g * w
        if lam is not None:
            lo, hi = box
            proj = np.clip(xd, lo, hi) - xd
            if proj.any():
                projected += 1
            new = new + (gamma / lam) * proj
        _check_finite(new, t, "x")
        state.x = ImageField(new)
        state.t = t + 1
        if t >= cfg.n_bi:
            mx.update(state.x.data)
            recorder.record(state.x.data)
            if samples is not None and (t - cfg.n_bi) % cfg.thin == 0:
                samples.append(state.x)
    wall = time.perf_counter() - start
    frac = projected / cfg.n_mc if lam is not None else None
    return _summarize(mx, None, recorder, samples, cfg.n_mc, wall, gamma, bound,
                      verified, probe_idx, projection_fraction=frac)


def run_red_ula(cfg: SamplerConfig, y: ImageField, op: DegradationOp, d: Denoiser,
                probe="auto", chain_index: int = 0, rng=None) -> ChainSummary:
    """Unadjusted Langevin chain on the residual-gradient posterior:
    x+ = x - gamma grad f(x, y) + gamma beta (D(x) - x) + sqrt(2 gamma) eps.
    """
    return _run_ula(cfg, y, op, d, probe, chain_index, box=None, lam=None, rng=rng)


def run_pnp_ula(cfg: SamplerConfig, y: ImageField, op: DegradationOp, d: Denoiser,
                box: tuple[float, float] = (-1.0, 2.0), lam: float | None = None,
                probe="auto", chain_index: int = 0, rng=None) -> ChainSummary:
    """RED-ULA recursion plus the optional box-projection drift.

    When ``lam`` is enabled, each step adds (gamma/lam)(clip(x, lo, hi) - x)
    and the summary reports the fraction of iterations whose state had any
    coordinate outside the box. ``lam=None`` disables the term, making the
    run exactly :func:`run_red_ula`.
    """
    return _run_ula(cfg, y, op, d, probe, chain_index, box=box, lam=lam, rng=rng)


def run_sr_split(cfg: SamplerConfig, y: ImageField, op: BlurThenDownsample,
                 d: Denoiser, probe="auto", chain_index: int = 0, rng=None) -> ChainSummary:
    """Triple-split sampler decoupling the blur B from the subsampling S.

    Per sweep: (i) z1 | x, y from the diagonal-precision Gaussian
    S^T S / sigma^2 + I/rho1_2; (ii) x | z1, z2 from the circulant-precision
    Gaussian B^T B / rho1_2 + I/rho2_2; (iii) one Langevin step on z2 | x
    with coupling rho2_2.
    """
    if not isinstance(op, BlurThenDownsample):
        raise ConfigError("run_sr_split requires a BlurThenDownsample operator")
    if cfg.rho1_2 is None or cfg.rho2_2 is None:
        raise ConfigError("run_sr_split needs rho1_2 and rho2_2 set")
    start = time.perf_counter()
    x = _normalized_adjoint_init(y, op)
    shape = x.shape
    h, w, _ = shape
    gamma, bound, verified = _resolve_gamma_split(cfg, d, shape, cfg.rho2_2)

    # z1 | x, y: diagonal precision S^T S / sigma^2 + I / rho1_2
    keep = np.zeros(shape, dtype=bool)
    keep[:: op.factor, :: op.factor, :] = True
    q1 = np.where(keep, 1.0 / cfg.sigma**2 + 1.0 / cfg.rho1_2, 1.0 / cfg.rho1_2)
    sty = op.sub.adjoint(y.data) / cfg.sigma**2
    # x | z1, z2: circulant precision B^T B / rho1_2 + I / rho2_2
    bhat = op.blur.kernel_fft(h, w)
    qhat2 = np.abs(bhat) ** 2 / cfg.rho1_2 + 1.0 / cfg.rho2_2
    x_solver = FourierDiagonalSolver(qhat=qhat2, rho2=cfg.rho2_2)

    if rng is None:
        rng = RngStream(cfg.seed, stream=chain_index)
    state = ChainState(x=x, z=None, t=0, rng=rng, z2=x)
    n_kept = cfg.n_mc - cfg.n_bi
    probe_idx = _resolve_probes(probe, shape, cfg.seed)
    recorder = _TraceRecorder(probe_idx, n_kept)
    mx = _RunningMoments(shape)
    samples: list[ImageField] | None = [] if cfg.store_samples else None

    for t in range(cfg.n_mc):
        try:
            bx = op.blur.apply(state.x.data)
            mu1 = (sty + bx / cfg.rho1_2) / q1
            z1 = mu1 + np.asarray(rng.standard_normal(shape)) / np.sqrt(q1)
            _check_finite(z1, t, "z1")
            state.z1 = ImageField(z1)
            rhs = op.blur.adjoint(z1) / cfg.rho1_2 + state.z2.data / cfg.rho2_2
            mu_x = _fft.ifft2(_fft.fft2(rhs, axes=(0, 1)) / qhat2[:, :, None],
                              axes=(0, 1)).real
            state.x = ImageField(
                mu_x + x_solver.perturb(np.asarray(rng.standard_normal(shape))))
            _check_finite(state.x.data, t, "x")
            state.z2 = lmc_z_step(state.z2, state.x, d, cfg.beta, cfg.rho2_2, gamma, rng)
            _check_finite(state.z2.data, t, "z2")
        except DivergenceError as exc:
            raise DivergenceError(t, exc.what) from None
        state.t = t + 1
        if t >= cfg.n_bi:
            mx.update(state.x.data)
            recorder.record(state.x.data)
            if samples is not None and (t - cfg.n_bi) % cfg.thin == 0:
                samples.append(state.x)
    wall = time.perf_counter() - start
    return _summarize(mx, None, recorder, samples, cfg.n_mc, wall, gamma, bound,
                      verified, probe_idx)
