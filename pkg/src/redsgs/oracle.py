"""Exact linear-Gaussian reference machinery.

When the denoiser is an exact linear symmetric map W, everything downstream
is Gaussian and computable in closed form on small problems:

* the target posterior (precision sigma^-2 A^T A + beta (I - W)),
* the variable-split (augmented) model and its marginals,
* the sampler's exact stationary law, obtained by reducing the chain to a
  linear Gaussian autoregression and solving a discrete Lyapunov equation,
* Wasserstein-2 distances between Gaussians,
* numeric evaluation of the contraction and discretization-bias bounds.

All dense algebra is guarded to n <= 4096 so the O(n^3) work stays cheap.
These oracles are what the measured chains are tested against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .operators import DegradationOp, dense_matrix

__all__ = [
    "GaussianDist",
    "BoundInputs",
    "LinearChainLaw",
    "OracleError",
    "linear_posterior",
    "axda_marginal",
    "lwsgs_stationary",
    "sr_split_stationary",
    "w2_gaussians",
    "evaluate_bounds",
    "solve_lyapunov",
    "mmse_denoiser_matrix",
]

DENSE_GUARD_N = 4096


class OracleError(ValueError):
    """Raised for non-contractive chains, guard violations, bad inputs."""


@dataclass(frozen=True, eq=False)
class GaussianDist:
    """Explicit Gaussian law: mean vector plus dense symmetric PSD covariance.

    The covariance is symmetrized on construction; eigenvalues below
    -1e-10 are rejected, anything in [-1e-10, 0) is clipped to 0 with a
    warning (Monte-Carlo covariances can be marginally indefinite).
    """

    mean: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        cov = np.asarray(self.cov, dtype=np.float64)
        n = mean.size
        if cov.shape != (n, n):
            raise OracleError(f"covariance shape {cov.shape} does not match mean dim {n}")
        asym = float(np.abs(cov - cov.T).max()) if n else 0.0
        if asym > 1e-10 * max(1.0, float(np.abs(cov).max())):
            raise OracleError(f"covariance is not symmetric (max asymmetry {asym:.3e})")
        cov = 0.5 * (cov + cov.T)
        lam = np.linalg.eigvalsh(cov)
        if lam.min() < -1e-10 * max(1.0, float(lam.max())):
            raise OracleError(f"covariance has eigenvalue {lam.min():.3e} < -1e-10")
        if lam.min() < 0.0:
            warnings.warn("clipping marginally negative covariance eigenvalues to 0")
            vecs = np.linalg.eigh(cov)[1]
            cov = (vecs * np.clip(lam, 0.0, None)) @ vecs.T
            cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, idx) -> "GaussianDist":
        idx = np.asarray(idx)
        return GaussianDist(self.mean[idx], self.cov[np.ix_(idx, idx)])


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    return (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ vecs.T


def w2_gaussians(g1: GaussianDist, g2: GaussianDist) -> float:
    """Wasserstein-2 distance between Gaussians (closed form).

    W2^2 = ||m1 - m2||^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}).
    """
    if g1.dim != g2.dim:
        raise OracleError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    s2_half = _psd_sqrt(g2.cov)
    cross = _psd_sqrt(s2_half @ g1.cov @ s2_half)
    trace_term = float(np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross))
    w2sq = float(np.sum((g1.mean - g2.mean) ** 2)) + max(trace_term, 0.0)
    return float(np.sqrt(w2sq))


def solve_lyapunov(G: np.ndarray, noise_cov: np.ndarray, tol: float = 1e-12,
                   max_iter: int = 200_000) -> np.ndarray:
    """Fixed-point solve of Sigma = G Sigma G^T + N to max-abs tolerance.

    Requires the spectral radius of G to be < 1; adequate because every
    caller pre-checks contraction.
    """
    rho = float(np.abs(np.linalg.eigvals(G)).max())
    if rho >= 1.0:
        raise OracleError(f"non-contractive transition: spectral radius {rho:.6f} >= 1")
    # the geometric tail after stopping is ~ increment * rho^2 / (1 - rho^2),
    # so shrink the increment threshold to land the solution itself at tol
    thresh = tol * max(1.0 - rho**2, 1e-3)
    sigma = noise_cov.copy()
    for _ in range(max_iter):
        nxt = G @ sigma @ G.T + noise_cov
        if float(np.abs(nxt - sigma).max()) < thresh:
            return 0.5 * (nxt + nxt.T)
        sigma = nxt
    raise OracleError(f"Lyapunov fixed point did not reach {tol} in {max_iter} iterations")


@dataclass(frozen=True, eq=False)
class LinearChainLaw:
    """Stationary law of an affine AR(1) recursion u+ = T u + b + noise.

    ``blocks`` names index ranges of the stacked state (e.g. "x", "z").
    ``mean_stderr`` gives the exact per-coordinate standard error of the
    empirical mean over ``n_samples`` stationary sweeps, accounting for
    autocorrelation through the chain's own transition matrix.
    """

    transition: np.ndarray = field(repr=False)
    offset: np.ndarray = field(repr=False)
    noise_cov: np.ndarray = field(repr=False)
    joint: GaussianDist = field(repr=False)
    blocks: tuple[tuple[str, slice], ...] = ()

    def marginal(self, name: str) -> GaussianDist:
        for bname, sl in self.blocks:
            if bname == name:
                return self.joint.marginal(np.arange(sl.start, sl.stop))
        raise OracleError(f"no block named {name!r}; have {[b for b, _ in self.blocks]}")

    def mean_stderr(self, n_samples: int, block: str | None = None) -> np.ndarray:
        """Std. error of the chain-mean estimator: sqrt(diag(S_inf) / N) with
        S_inf = Sigma + T (I-T)^-1 Sigma + (T (I-T)^-1 Sigma)^T."""
        if n_samples < 1:
            raise OracleError("n_samples must be >= 1")
        T = self.transition
        sig = self.joint.cov
        geo = np.linalg.solve(np.eye(T.shape[0]) - T, sig)
        s_inf = sig + T @ geo + (T @ geo).T
        var = np.clip(np.diag(s_inf), 0.0, None) / n_samples
        se = np.sqrt(var)
        if block is None:
            return se
        for bname, sl in self.blocks:
            if bname == block:
                return se[sl]
        raise OracleError(f"no block named {block!r}")


def _dense_problem(W: np.ndarray, op: DegradationOp, sigma: float, y: np.ndarray, shape):
    h, w, c = shape
    n = h * w * c
    if n > DENSE_GUARD_N:
        raise OracleError(f"dense oracle guarded to n <= {DENSE_GUARD_N}, got {n}")
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (n, n):
        raise OracleError(f"W must be {n}x{n} for image shape {shape}, got {W.shape}")
    if float(np.abs(W - W.T).max()) > 1e-10 * max(1.0, float(np.abs(W).max())):
        raise OracleError("W must be symmetric")
    if sigma <= 0:
        raise OracleError(f"sigma must be positive, got {sigma}")
    A = dense_matrix(op, shape, max_n=DENSE_GUARD_N)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != A.shape[0]:
        raise OracleError(f"y has {y.size} entries, operator range is {A.shape[0]}")
    return W, A, y, n


def linear_posterior(W, beta: float, op: DegradationOp, sigma: float, y, shape) -> GaussianDist:
    """Exact posterior for a linear denoiser D(x) = W x.

    Precision sigma^-2 A^T A + beta (I - W); mean solves it against
    sigma^-2 A^T y. ``shape`` is the (H, W, C) image shape the operator
    acts on.
    """
    W, A, yv, n = _dense_problem(W, op, sigma, y, shape)
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))
    if lam.max() >= 1.0 + 1e-12 and beta > 0:
        raise OracleError(f"W spectrum reaches {lam.max():.6f} >= 1; posterior may be improper")
    prec = (A.T @ A) / sigma**2 + beta * (np.eye(n) - W)
    try:
        cov = np.linalg.inv(prec)
    except np.linalg.LinAlgError as exc:
        raise OracleError("posterior precision is singular") from exc
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (A.T @ yv) / sigma**2
    return GaussianDist(mean, cov)


def axda_marginal(W, beta: float, rho2: float, op: DegradationOp, sigma: float, y, shape,
                  which: str = "x") -> GaussianDist:
    """Exact marginals of the variable-split (augmented) model.

    The joint over (x, z) has precision blocks
    [[Q, -I/rho2], [-I/rho2, beta (I - W) + I/rho2]] with
    Q = sigma^-2 A^T A + I/rho2, and linear term (sigma^-2 A^T y, 0).
    ``which`` selects "x", "z" or "joint" (x coordinates first).
    """
    if rho2 <= 0:
        raise OracleError(f"rho2 must be positive, got {rho2}")
    W, A, yv, n = _dense_problem(W, op, sigma, y, shape)
    eye = np.eye(n)
    Q = (A.T @ A) / sigma**2 + eye / rho2
    prec = np.block([[Q, -eye / rho2], [-eye / rho2, beta * (eye - W) + eye / rho2]])
    try:
        cov = np.linalg.inv(prec)
    except np.linalg.LinAlgError as exc:
        raise OracleError("augmented-model precision is singular") from exc
    cov = 0.5 * (cov + cov.T)
    lin = np.concatenate([(A.T @ yv) / sigma**2, np.zeros(n)])
    mean = cov @ lin
    joint = GaussianDist(mean, cov)
    if which == "joint":
        return joint
    if which == "x":
        return joint.marginal(np.arange(n))
    if which == "z":
        return joint.marginal(np.arange(n, 2 * n))
    raise OracleError(f"which must be 'x', 'z' or 'joint', got {which!r}")


def lwsgs_stationary(W, beta: float, rho2: float, gamma: float, op: DegradationOp,
                     sigma: float, y, shape) -> LinearChainLaw:
    """Exact stationary law of the split sampler with a linear denoiser.

    The auxiliary chain is the linear Gaussian autoregression
    z+ = G z + c + xi with

        G = (1 - gamma/rho2) I - gamma beta (I - W) + (gamma/rho2^2) Q^-1,
        c = (gamma/rho2) Q^-1 sigma^-2 A^T y,
        Cov(xi) = 2 gamma I + (gamma/rho2)^2 Q^-1.

    Its covariance solves the discrete Lyapunov equation (fixed point to
    1e-12 max-abs); the joint over (x, z) follows from x | z being Gaussian
    with mean mu(z) and covariance Q^-1. Raises if G is not contractive,
    reporting the violating step size.
    """
    if rho2 <= 0 or gamma <= 0:
        raise OracleError(f"rho2 and gamma must be positive, got {rho2}, {gamma}")
    W, A, yv, n = _dense_problem(W, op, sigma, y, shape)
    eye = np.eye(n)
    Q = (A.T @ A) / sigma**2 + eye / rho2
    Qinv = np.linalg.inv(Q)
    Qinv = 0.5 * (Qinv + Qinv.T)
    a = Qinv @ (A.T @ yv) / sigma**2           # data part of mu(z)
    M = Qinv / rho2                            # z part of mu(z)

    G = (1.0 - gamma / rho2) * eye - gamma * beta * (eye - W) + (gamma / rho2**2) * Qinv
    rho_g = float(np.abs(np.linalg.eigvals(G)).max())
    if rho_g >= 1.0:
        raise OracleError(
            f"auxiliary chain is not contractive at gamma = {gamma!r} "
            f"(spectral radius {rho_g:.6f}); reduce the step size"
        )
    c = (gamma / rho2) * (Qinv @ (A.T @ yv)) / sigma**2
    noise_z = 2.0 * gamma * eye + (gamma / rho2) ** 2 * Qinv
    sigma_z = solve_lyapunov(G, noise_z)
    m_z = np.linalg.solve(eye - G, c)

    # extend to the joint over (x, z): x | z ~ N(a + M z, Q^-1)
    m_x = a + M @ m_z
    cov_xx = M @ sigma_z @ M.T + Qinv
    cov_xz = M @ sigma_z
    joint_mean = np.concatenate([m_x, m_z])
    joint_cov = np.block([[cov_xx, cov_xz], [cov_xz.T, sigma_z]])

    # stacked one-sweep transition for (x, z), used for mean standard errors
    R = (1.0 - gamma * beta - gamma / rho2) * eye + gamma * beta * W
    T = np.block([[(gamma / rho2) * M, M @ R], [(gamma / rho2) * eye, R]])
    b = np.concatenate([a, np.zeros(n)])
    noise_v = np.block(
        [[2.0 * gamma * (M @ M.T) + Qinv, 2.0 * gamma * M],
         [2.0 * gamma * M.T, 2.0 * gamma * eye]]
    )
    return LinearChainLaw(
        transition=T,
        offset=b,
        noise_cov=noise_v,
        joint=GaussianDist(joint_mean, joint_cov),
        blocks=(("x", slice(0, n)), ("z", slice(n, 2 * n))),
    )


def sr_split_stationary(W, beta: float, rho1_2: float, rho2_2: float, gamma: float,
                        op, sigma: float, y, shape) -> LinearChainLaw:
    """Exact stationary law of the triple-split sampler (linear denoiser).

    One sweep (i) draws z1 | x, y, (ii) draws x | z1, z2, (iii) makes one
    Langevin step on z2 | x; stacking u = (z1, x, z2) gives an affine
    recursion u+ = T u + b + E w whose stationary covariance solves a
    3n x 3n Lyapunov equation.
    """
    from .operators import BlurThenDownsample

    if not isinstance(op, BlurThenDownsample):
        raise OracleError("triple-split oracle requires a BlurThenDownsample operator")
    if min(rho1_2, rho2_2, gamma) <= 0:
        raise OracleError("rho1_2, rho2_2 and gamma must be positive")
    h, w, c = shape
    n = h * w * c
    if 3 * n > 3 * DENSE_GUARD_N:
        raise OracleError(f"dense oracle guarded to n <= {DENSE_GUARD_N}, got {n}")
    W = np.asarray(W, dtype=np.float64)
    B = dense_matrix(op.blur, shape, max_n=DENSE_GUARD_N)
    S = dense_matrix(op.sub, shape, max_n=DENSE_GUARD_N)
    yv = np.asarray(y, dtype=np.float64).ravel()
    eye = np.eye(n)

    P1 = (S.T @ S) / sigma**2 + eye / rho1_2
    P2 = (B.T @ B) / rho1_2 + eye / rho2_2
    P1inv = np.linalg.inv(P1)
    P2inv = np.linalg.inv(P2)
    K1 = P1inv @ (S.T @ yv) / sigma**2
    M1 = P1inv @ B / rho1_2                     # z1+  = M1 x + K1 + L1 w1
    M2 = P2inv @ B.T / rho1_2                   # x+   = M2 z1+ + M3 z2 + L2 w2
    M3 = P2inv / rho2_2
    R = (1.0 - gamma * beta - gamma / rho2_2) * eye + gamma * beta * W
    g2 = gamma / rho2_2                         # z2+  = R z2 + g2 x+ + sqrt(2 gamma) w3

    L1 = _psd_sqrt(P1inv)
    L2 = _psd_sqrt(P2inv)
    zero = np.zeros((n, n))
    T = np.block(
        [
            [zero, M1, zero],
            [zero, M2 @ M1, M3],
            [zero, g2 * (M2 @ M1), R + g2 * M3],
        ]
    )
    b = np.concatenate([K1, M2 @ K1, g2 * (M2 @ K1)])
    E = np.block(
        [
            [L1, zero, zero],
            [M2 @ L1, L2, zero],
            [g2 * (M2 @ L1), g2 * L2, np.sqrt(2.0 * gamma) * eye],
        ]
    )
    noise = E @ E.T
    rho_t = float(np.abs(np.linalg.eigvals(T)).max())
    if rho_t >= 1.0:
        raise OracleError(
            f"triple-split sweep not contractive at gamma = {gamma!r} "
            f"(spectral radius {rho_t:.6f})"
        )
    sig = solve_lyapunov(T, noise)
    mean = np.linalg.solve(np.eye(3 * n) - T, b)
    return LinearChainLaw(
        transition=T,
        offset=b,
        noise_cov=noise,
        joint=GaussianDist(mean, sig),
        blocks=(("z1", slice(0, n)), ("x", slice(n, 2 * n)), ("z2", slice(2 * n, 3 * n))),
    )


@dataclass(frozen=True)
class BoundInputs:
    """Numeric ingredients of the contraction and bias bounds.

    m_g and M_g are the prior potential's strong-convexity and Hessian-norm
    constants; q_inv_norm is the operator norm of Q^-1.
    """

    n: int
    beta: float
    rho2: float
    gamma: float
    m_g: float
    M_g: float
    q_inv_norm: float

    def __post_init__(self):
        if not (0 < self.m_g <= self.M_g):
            raise OracleError(f"need 0 < m_g <= M_g, got {self.m_g}, {self.M_g}")
        if min(self.n, self.beta, self.rho2, self.gamma) <= 0 or self.q_inv_norm < 0:
            raise OracleError("n, beta, rho2, gamma must be positive; q_inv_norm >= 0")
        if self.gamma > self.bias_window() * (1 + 1e-12):
            raise OracleError(
                f"gamma = {self.gamma!r} exceeds the bias-bound window "
                f"{self.bias_window()!r} = 2/(beta m_g + beta M_g + 1/rho2)"
            )

    @property
    def m_tilde(self) -> float:
        return self.beta * self.m_g + 1.0 / self.rho2

    @property
    def M_tilde(self) -> float:
        return self.beta * self.M_g + 1.0 / self.rho2

    @property
    def C1(self) -> float:
        return 1.0 + self.q_inv_norm**2 / self.rho2

    @property
    def C2(self) -> float:
        return (2.0 / (self.beta * self.m_g)) * self.C1

    def contraction_window(self) -> float:
        return 1.0 / self.M_tilde

    def bias_window(self) -> float:
        return 2.0 / (self.beta * self.m_g + self.beta * self.M_g + 1.0 / self.rho2)


def evaluate_bounds(inputs: BoundInputs, t: int, w2_init: float,
                    which: str = "both") -> dict[str, float]:
    """Right-hand sides of the convergence and bias bounds.

    contraction_rhs bounds W2^2 after t sweeps started at W2^2 = w2_init:
        C1 (1 - gamma beta m_g)^(2(t-1)) w2_init,  valid for
        gamma <= 1/(beta M_g + 1/rho2).
    bias_rhs bounds W2^2 between the augmented target and the sampler's
    stationary law:
        n gamma C2 M~^2 (1 + gamma^2 M~^2 / 12 + gamma M~^2 / (2 m~)),
        valid for gamma <= 2/(beta m_g + beta M_g + 1/rho2).

    ``which`` selects "contraction", "bias" or "both"; requesting a bound
    outside its step-size window raises an error naming it.
    """
    if t < 1:
        raise OracleError(f"t must be >= 1, got {t}")
    if w2_init < 0:
        raise OracleError("w2_init must be nonnegative")
    if which not in ("both", "contraction", "bias"):
        raise OracleError(f"which must be 'contraction', 'bias' or 'both', got {which!r}")
    out: dict[str, float] = {}
    if which in ("both", "contraction"):
        if inputs.gamma > inputs.contraction_window() * (1 + 1e-12):
            raise OracleError(
                "contraction bound requires gamma <= 1/(beta M_g + 1/rho2) "
                f"= {inputs.contraction_window()!r}, got {inputs.gamma!r}"
            )
        rate = 1.0 - inputs.gamma * inputs.beta * inputs.m_g
        out["contraction_rhs"] = inputs.C1 * rate ** (2 * (t - 1)) * w2_init
    if which in ("both", "bias"):
        if inputs.gamma > inputs.bias_window() * (1 + 1e-12):
            raise OracleError(
                "bias bound requires gamma <= 2/(beta m_g + beta M_g + 1/rho2) "
                f"= {inputs.bias_window()!r}, got {inputs.gamma!r}"
            )
        g, Mt, mt = inputs.gamma, inputs.M_tilde, inputs.m_tilde
        out["bias_rhs"] = (
            inputs.n * g * inputs.C2 * Mt**2 * (1.0 + g**2 * Mt**2 / 12.0 + g * Mt**2 / (2.0 * mt))
        )
    return out


def mmse_denoiser_matrix(prior_cov: np.ndarray, eps: float) -> np.ndarray:
    """Posterior-mean denoiser for a zero-mean Gaussian prior: S (S + eps I)^-1.

    For this denoiser the score identity
    eps * grad log p_eps(x) = D(x) - x holds exactly, with p_eps the prior
    smoothed by an isotropic Gaussian of variance eps.
    """
    S = np.asarray(prior_cov, dtype=np.float64)
    if eps <= 0:
        raise OracleError(f"eps must be positive, got {eps}")
    n = S.shape[0]
    return S @ np.linalg.inv(S + eps * np.eye(n))
