"""Posterior sampling for denoiser-regularized linear-Gaussian inverse problems.

The package couples a variable-splitting Gibbs sampler (whose auxiliary
update is a single Langevin step) with exact small-scale Gaussian oracles,
so its convergence and bias behavior can be tested rather than trusted.
"""

from .config import PRESETS, RunConfig, build_run_config, parse_config_file
from .denoise import (
    Denoiser,
    DenoiserError,
    Plugin,
    RedConditionReport,
    SymmetricConv,
    TransformShrink,
    dct_lowpass_gains,
    denoise_apply,
    dense_denoiser_matrix,
    fd_jacobian,
    red_gradient,
    red_potential,
    verify_red_conditions,
)
from .diagnostics import acf, iat, median_variance_probe, psnr, ssim
from .images import (
    ImageField,
    load_image,
    read_png,
    read_rfi1,
    synthetic_image,
    write_png,
    write_rfi1,
)
from .operators import (
    BlurThenDownsample,
    Circulant,
    DegradationOp,
    Downsample,
    Mask,
    NoiseModel,
    adjoint_op,
    apply_op,
    degrade,
    dense_matrix,
    gaussian_kernel,
    random_mask,
    sigma_from_snr,
)
from .oracle import (
    BoundInputs,
    GaussianDist,
    LinearChainLaw,
    axda_marginal,
    evaluate_bounds,
    linear_posterior,
    lwsgs_stationary,
    mmse_denoiser_matrix,
    sr_split_stationary,
    w2_gaussians,
)
from .rng import RngStream
from .samplers import (
    ChainState,
    ChainSummary,
    ConfigError,
    DivergenceError,
    SamplerConfig,
    conditional_mu_Q,
    lmc_z_step,
    log_nu_schedule,
    max_step_size,
    run_lwsgs,
    run_lwsgs_coupled,
    run_pnp_ula,
    run_red_ula,
    run_sr_split,
    sample_x_cond,
)

__version__ = "0.1.0"
