import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

from redsgs import (
    BoundInputs,
    Circulant,
    GaussianDist,
    ImageField,
    Mask,
    NoiseModel,
    RngStream,
    SamplerConfig,
    SymmetricConv,
    axda_marginal,
    degrade,
    dense_denoiser_matrix,
    evaluate_bounds,
    gaussian_kernel,
    linear_posterior,
    lwsgs_stationary,
    mmse_denoiser_matrix,
    run_lwsgs,
    synthetic_image,
    w2_gaussians,
)
from redsgs.oracle import OracleError, solve_lyapunov
from redsgs.samplers import build_solver, max_step_size

from conftest import random_image

IDENTITY_OP = Circulant(np.array([[1.0]]))


def small_problem(size=8, seed=5, sigma=0.5, kernel_std=1.0):
    shape = (size, size, 1)
    truth = synthetic_image(size, size, 1, seed=seed)
    op = Circulant(gaussian_kernel(min(5, size - 1 if size % 2 == 0 else size), kernel_std)) \
        if size >= 5 else Circulant(gaussian_kernel(3, kernel_std))
    d = SymmetricConv(kernel=gaussian_kernel(3, 0.8), eps0=0.05)
    y = degrade(truth, op, NoiseModel(sigma), RngStream(11, 1))
    W = dense_denoiser_matrix(d, shape)
    return shape, op, d, W, y, sigma


# --- GaussianDist ---------------------------------------------------------


def test_gaussian_dist_rejects_asymmetric_covariance():
    cov = np.array([[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(OracleError):
        GaussianDist(np.zeros(2), cov)


def test_gaussian_dist_clips_marginally_negative_eigenvalues():
    cov = np.array([[1.0, 1.0], [1.0, 1.0 - 5e-11]])
    with pytest.warns(UserWarning):
        g = GaussianDist(np.zeros(2), cov)
    assert np.linalg.eigvalsh(g.cov).min() >= -1e-15


def test_gaussian_dist_rejects_indefinite_covariance():
    with pytest.raises(OracleError):
        GaussianDist(np.zeros(2), np.diag([1.0, -0.5]))


# --- linear_posterior -----------------------------------------------------


def test_linear_posterior_w0_identity():
    # W = 0, A = I, sigma = 1, beta = 1: precision 2I, mean y/2
    shape = (3, 3, 1)
    y = random_image(shape, seed=1)
    post = linear_posterior(np.zeros((9, 9)), 1.0, IDENTITY_OP, 1.0, y.ravel(), shape)
    assert np.abs(post.cov - 0.5 * np.eye(9)).max() < 1e-12
    assert np.abs(post.mean - 0.5 * y.ravel()).max() < 1e-12


def test_linear_posterior_zero_data_zero_mean():
    shape, op, d, W, y, sigma = small_problem()
    post = linear_posterior(W, 2.0, op, sigma, np.zeros(64), shape)
    assert np.abs(post.mean).max() == 0.0


def test_linear_posterior_agrees_with_grid_quadrature_2pixel():
    # brute-force normalization of exp(-f - beta*g) on a 2-pixel image
    shape = (1, 2, 1)
    W = np.array([[0.4, 0.2], [0.2, 0.4]])
    beta, sigma = 1.5, 0.7
    y = np.array([0.8, -0.3])
    post = linear_posterior(W, beta, IDENTITY_OP, sigma, y, shape)

    grid = np.linspace(-4, 4, 401)
    g1, g2 = np.meshgrid(grid, grid, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
    resid = pts - y
    f = 0.5 / sigma**2 * np.sum(resid**2, axis=1)
    lam = np.eye(2) - W
    g = 0.5 * np.einsum("ni,ij,nj->n", pts, lam, pts)
    w = np.exp(-(f + beta * g))
    w /= w.sum()
    grid_mean = w @ pts
    assert np.abs(grid_mean - post.mean).max() < 1e-3


# --- lwsgs_stationary ------------------------------------------------------


def test_stationary_scalar_closed_form():
    # n = 1, W = 0.5, beta = 1, rho2 = 1, sigma = 1, A = 1, gamma = 0.1:
    # Q = 2, G = 0.9, c = 0.05 y, noise = 0.205, Sigma = 0.205/(1 - 0.81)
    shape = (1, 1, 1)
    yval = 2.0
    law = lwsgs_stationary(np.array([[0.5]]), 1.0, 1.0, 0.1, IDENTITY_OP, 1.0,
                           np.array([yval]), shape)
    z = law.marginal("z")
    assert abs(z.mean[0] - 0.5 * yval) < 1e-12
    assert abs(z.cov[0, 0] - 0.205 / (1 - 0.81)) < 1e-12
    x = law.marginal("x")
    assert abs(x.mean[0] - 0.75 * yval) < 1e-12


def test_stationary_bias_shrinks_with_gamma():
    shape, op, d, W, y, sigma = small_problem()
    beta, rho2 = 1.0, 1.0
    target = axda_marginal(W, beta, rho2, op, sigma, y.ravel(), shape, which="joint")
    m_g, M_g = d.hessian_bounds(8, 8)
    g0 = max_step_size(beta, M_g, rho2)
    w2_full = w2_gaussians(target, lwsgs_stationary(W, beta, rho2, g0, op, sigma,
                                                    y.ravel(), shape).joint)
    w2_half = w2_gaussians(target, lwsgs_stationary(W, beta, rho2, g0 / 2, op, sigma,
                                                    y.ravel(), shape).joint)
    assert w2_half < w2_full


def test_stationary_joint_consistent_with_stacked_transition():
    # the (x, z) joint built from the z-reduction must solve the stacked
    # one-sweep Lyapunov equation too (independent construction)
    shape, op, d, W, y, sigma = small_problem(size=4, kernel_std=0.8)
    law = lwsgs_stationary(W, 1.2, 0.7, 0.15, op, sigma, y.ravel(), shape)
    sig = solve_discrete_lyapunov(law.transition, law.noise_cov)
    mean = np.linalg.solve(np.eye(law.transition.shape[0]) - law.transition, law.offset)
    assert np.abs(sig - law.joint.cov).max() < 1e-9
    assert np.abs(mean - law.joint.mean).max() < 1e-10


def test_solve_lyapunov_matches_scipy():
    rng = np.random.Generator(np.random.Philox(key=np.uint64(3)))
    G = 0.6 * rng.normal(size=(6, 6)) / np.sqrt(6)
    N = rng.normal(size=(6, 6))
    N = N @ N.T + np.eye(6)
    ours = solve_lyapunov(G, N)
    ref = solve_discrete_lyapunov(G, N)
    assert np.abs(ours - ref).max() < 1e-10


def test_stationary_rejects_noncontractive_gamma():
    shape, op, d, W, y, sigma = small_problem(size=4, kernel_std=0.8)
    with pytest.raises(OracleError, match="gamma"):
        lwsgs_stationary(W, 1.0, 1.0, 5.0, op, sigma, y.ravel(), shape)


def test_empirical_moments_match_stationary_law():
    # measured chain vs Lyapunov solution, diagonal entries within 5 SE
    shape, op, d, W, y, sigma = small_problem()
    beta, rho2 = 1.0, 1.0
    m_g, M_g = d.hessian_bounds(8, 8)
    gamma = 0.8 * max_step_size(beta, M_g, rho2)
    law = lwsgs_stationary(W, beta, rho2, gamma, op, sigma, y.ravel(), shape)
    cfg = SamplerConfig(beta=beta, rho2=rho2, sigma=sigma, n_mc=100_000, n_bi=5_000,
                        gamma=gamma, seed=12)
    summary = run_lwsgs(cfg, y, op, d, probe="none")
    n_kept = summary.kept_samples
    ox = law.marginal("x")
    var_diag = np.diag(ox.cov)
    # worst-mode autocorrelation bound inflates the variance-of-variance SE
    rho_g = float(np.abs(np.linalg.eigvals(law.transition)).max())
    tau = (1 + rho_g**2) / (1 - rho_g**2)
    se_var = var_diag * np.sqrt(2.0 * tau / n_kept)
    dev_var = np.abs(summary.var_x.ravel() - var_diag)
    assert (dev_var <= 5 * se_var).mean() >= 0.99
    dev_mean = np.abs(summary.mean_x.ravel() - ox.mean)
    assert (dev_mean <= 5 * law.mean_stderr(n_kept, block="x")).all()


# --- axda_marginal ----------------------------------------------------------


def test_axda_approaches_posterior_as_rho_shrinks():
    shape, op, d, W, y, sigma = small_problem()
    post = linear_posterior(W, 1.0, op, sigma, y.ravel(), shape)
    xm = axda_marginal(W, 1.0, 1e-4, op, sigma, y.ravel(), shape, which="x")
    assert np.abs(xm.mean - post.mean).max() < 1e-3


def test_axda_beta_zero_collapses_to_likelihood_only():
    # full-rank circulant: the z-coupling cancels exactly
    shape, op, d, W, y, sigma = small_problem(size=4, kernel_std=0.6)
    from redsgs import dense_matrix

    xm = axda_marginal(np.zeros((16, 16)), 0.0, 0.5, op, sigma, y.ravel(), shape, which="x")
    A = dense_matrix(op, shape)
    lik_cov = np.linalg.inv(A.T @ A / sigma**2)
    assert np.abs(xm.cov - lik_cov).max() < 1e-8 * np.abs(lik_cov).max()


def test_axda_joint_covariance_symmetric():
    shape, op, d, W, y, sigma = small_problem(size=4, kernel_std=0.8)
    joint = axda_marginal(W, 1.0, 0.5, op, sigma, y.ravel(), shape, which="joint")
    assert np.abs(joint.cov - joint.cov.T).max() < 1e-10


def test_axda_z_marginal_matches_schur_complement():
    shape, op, d, W, y, sigma = small_problem(size=4, kernel_std=0.8)
    beta, rho2 = 1.3, 0.6
    from redsgs import dense_matrix

    A = dense_matrix(op, shape)
    n = 16
    Q = A.T @ A / sigma**2 + np.eye(n) / rho2
    prec_z = beta * (np.eye(n) - W) + np.eye(n) / rho2 - np.linalg.inv(Q) / rho2**2
    zm = axda_marginal(W, beta, rho2, op, sigma, y.ravel(), shape, which="z")
    assert np.abs(np.linalg.inv(zm.cov) - prec_z).max() < 1e-8 * np.abs(prec_z).max()


def test_axda_exactness_along_rho_sweep():
    shape, op, d, W, y, sigma = small_problem()
    post = linear_posterior(W, 1.0, op, sigma, y.ravel(), shape)
    vals = [
        w2_gaussians(post, axda_marginal(W, 1.0, r2, op, sigma, y.ravel(), shape, which="x"))
        for r2 in (1.0, 1e-1, 1e-2, 1e-3)
    ]
    assert all(vals[i + 1] < vals[i] for i in range(3))
    assert vals[-1] < 0.01 * vals[0]


# --- w2_gaussians ------------------------------------------------------------


def test_w2_identical_laws_is_zero():
    g = GaussianDist(np.arange(3.0), np.diag([1.0, 2.0, 3.0]))
    assert w2_gaussians(g, g) < 1e-10


def test_w2_translation_only():
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    g1 = GaussianDist(np.zeros(2), cov)
    g2 = GaussianDist(np.array([3.0, -4.0]), cov)
    assert abs(w2_gaussians(g1, g2) - 5.0) < 1e-9


def test_w2_isotropic_scaling():
    n = 7
    a, b = 1.5, 0.4
    g1 = GaussianDist(np.zeros(n), a**2 * np.eye(n))
    g2 = GaussianDist(np.zeros(n), b**2 * np.eye(n))
    assert abs(w2_gaussians(g1, g2) - np.sqrt(n) * abs(a - b)) < 1e-10


def test_w2_dimension_mismatch():
    with pytest.raises(OracleError):
        w2_gaussians(GaussianDist(np.zeros(2), np.eye(2)),
                     GaussianDist(np.zeros(3), np.eye(3)))


# --- evaluate_bounds ----------------------------------------------------------


def bound_inputs(gamma=0.2):
    return BoundInputs(n=1, beta=1.0, rho2=1.0, gamma=gamma, m_g=1.0, M_g=1.0,
                       q_inv_norm=0.5)


def test_bounds_first_step_is_c1_times_initial():
    inp = bound_inputs()
    out = evaluate_bounds(inp, t=1, w2_init=3.0)
    assert abs(out["contraction_rhs"] - inp.C1 * 3.0) < 1e-12


def test_bias_bound_scalar_hand_arithmetic():
    # n=1, beta=m_g=M_g=rho2=1, gamma=0.2: m~ = M~ = 2,
    # bias = 0.2 * C2 * 4 * (1 + 0.04*4/12 + 0.2*4/4)
    inp = bound_inputs(gamma=0.2)
    c2 = 2.0 * (1.0 + 0.5**2)
    expected = 0.2 * c2 * 4.0 * (1.0 + 0.04 * 4.0 / 12.0 + 0.2 * 4.0 / 4.0)
    got = evaluate_bounds(inp, t=1, w2_init=0.0)["bias_rhs"]
    assert abs(got - expected) < 1e-12 * expected


def test_bias_bound_decreases_and_leading_term_halves():
    hi = evaluate_bounds(bound_inputs(0.2), t=1, w2_init=0.0)["bias_rhs"]
    lo = evaluate_bounds(bound_inputs(0.1), t=1, w2_init=0.0)["bias_rhs"]
    assert lo < hi
    # leading term is linear in gamma; correction terms shrink too
    assert 1.9 < hi / lo < 2.3


def test_bounds_reject_gamma_outside_windows():
    # contraction window is 1/M~ = 0.5; bias window is 2/3
    with pytest.raises(OracleError, match="contraction"):
        evaluate_bounds(bound_inputs(gamma=0.6), t=1, w2_init=1.0, which="contraction")
    # gamma beyond the bias window is rejected at construction
    with pytest.raises(OracleError, match="bias"):
        BoundInputs(n=1, beta=1.0, rho2=1.0, gamma=0.7, m_g=1.0, M_g=1.0, q_inv_norm=0.5)
    # bias mode still fine beyond the contraction window
    out = evaluate_bounds(bound_inputs(gamma=0.6), t=1, w2_init=1.0, which="bias")
    assert out["bias_rhs"] > 0


def test_bound_inputs_validation():
    with pytest.raises(OracleError):
        BoundInputs(n=1, beta=1.0, rho2=1.0, gamma=0.1, m_g=2.0, M_g=1.0, q_inv_norm=0.5)


# --- Tweedie identity --------------------------------------------------------


def test_tweedie_identity_for_gaussian_mmse_denoiser():
    # eps * grad log p_eps(x) = D*(x) - x, both sides dense
    rng = np.random.Generator(np.random.Philox(key=np.uint64(17)))
    n, eps = 12, 0.3
    B = rng.normal(size=(n, n))
    prior_cov = B @ B.T / n + 0.5 * np.eye(n)
    D = mmse_denoiser_matrix(prior_cov, eps)
    for _ in range(5):
        x = rng.normal(size=n)
        lhs = eps * (-np.linalg.solve(prior_cov + eps * np.eye(n), x))
        rhs = D @ x - x
        assert np.abs(lhs - rhs).max() < 1e-10


# --- q_inv_norm plumbing ------------------------------------------------------


def test_solver_q_inv_norm_is_exact():
    shape, op, d, W, y, sigma = small_problem(size=4, kernel_std=0.8)
    rho2 = 0.7
    solver = build_solver(op, shape, sigma, rho2)
    from redsgs import dense_matrix

    A = dense_matrix(op, shape)
    Q = A.T @ A / sigma**2 + np.eye(16) / rho2
    exact = 1.0 / np.linalg.eigvalsh(Q).min()
    assert abs(solver.q_inv_norm - exact) < 1e-10 * exact

    keep = np.zeros((4, 4, 1), dtype=bool)
    keep[0, 0, 0] = True
    msolver = build_solver(Mask(keep), shape, sigma, rho2)
    assert abs(msolver.q_inv_norm - rho2) < 1e-14
