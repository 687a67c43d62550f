"""Command-line surface: simulate | sample | verify-denoiser | oracle-check | metrics.

Every run writes a JSON manifest recording the exact configuration, the
seed, the step-size bound used and the divergence status, so reruns are
reproducible and failures leave a machine-readable record instead of
orphaned artifacts. All CSV output is comma-separated with '.' decimals,
LF line endings and a header row.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, samplers
from .config import PRESETS, RunConfig, RunConfigError, build_run_config, parse_config_file
from .denoise import (
    Plugin,
    SymmetricConv,
    TransformShrink,
    dct_lowpass_gains,
    dense_denoiser_matrix,
    verify_red_conditions,
)
from .images import ImageField, load_image, synthetic_image, write_png, write_rfi1
from .operators import (
    BlurThenDownsample,
    Circulant,
    NoiseModel,
    adjoint_op,
    degrade,
    gaussian_kernel,
    random_mask,
    sigma_from_snr,
)
from .oracle import BoundInputs, axda_marginal, evaluate_bounds, lwsgs_stationary, w2_gaussians
from .rng import RngStream

_NOISE_STREAM = 0xA001
_MASK_STREAM = 0xA002
_PATCH_STREAM = 0xA003


# ---------------------------------------------------------------------------
# small shared helpers


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(outdir: Path, manifest: dict) -> None:
    manifest = dict(manifest)
    manifest["written_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def parse_denoiser_spec(spec: str, shape=None):
    """Build a denoiser from a compact spec string.

    symconv:size=5,std=1.0,eps0=0.05
    dctshrink:strength=4.0,eps0=0.05      (needs the image shape)
    plugin:/path/to/exe,nu=0.1
    """
    kind, _, rest = spec.partition(":")
    params: dict[str, str] = {}
    arg0 = None
    for i, part in enumerate(p for p in rest.split(",") if p):
        if "=" in part:
            k, v = part.split("=", 1)
            params[k.strip()] = v.strip()
        elif i == 0:
            arg0 = part.strip()
        else:
            raise RunConfigError(f"bad denoiser spec fragment {part!r} in {spec!r}")
    if kind == "symconv":
        size = int(params.get("size", "5"))
        std = float(params.get("std", "1.0"))
        eps0 = float(params.get("eps0", "0.05"))
        return SymmetricConv(kernel=gaussian_kernel(size, std), eps0=eps0)
    if kind == "dctshrink":
        if shape is None:
            raise RunConfigError("dctshrink denoiser needs the image shape")
        strength = float(params.get("strength", "4.0"))
        eps0 = float(params.get("eps0", "0.05"))
        return TransformShrink(gains=dct_lowpass_gains(shape[0], shape[1], strength, eps0))
    if kind == "plugin":
        if arg0 is None:
            raise RunConfigError(f"plugin spec needs an executable path: {spec!r}")
        nu = float(params.get("nu", "0.0"))
        return Plugin(command=(arg0,), nu=nu)
    raise RunConfigError(f"unknown denoiser kind {kind!r}")


def build_operator(cfg: RunConfig, shape):
    h, w, c = shape
    if cfg.task == "deblur":
        return Circulant(gaussian_kernel(cfg.kernel_size, cfg.kernel_std))
    if cfg.task == "inpaint":
        rng = RngStream(cfg.seed, stream=_MASK_STREAM)
        return random_mask(h, w, c, keep_fraction=1.0 - cfg.mask_fraction, rng=rng)
    if cfg.task == "superres":
        if h % cfg.sr_factor or w % cfg.sr_factor:
            raise RunConfigError(f"sr_factor {cfg.sr_factor} does not divide image {h}x{w}")
        return BlurThenDownsample(gaussian_kernel(cfg.kernel_size, cfg.kernel_std), cfg.sr_factor)
    raise RunConfigError(f"unknown task {cfg.task!r}")


def _observation_image(y: ImageField, op, truth_shape) -> ImageField:
    """Image-shaped view of the measurement (adjoint zero-fill if needed)."""
    if y.shape == tuple(truth_shape):
        return y
    return adjoint_op(op, y)


def _probe_arg(probe: str):
    if probe in ("auto", "all", "none"):
        return probe
    return [int(tok) for tok in probe.split(";") if tok]


def _sampler_config(cfg: RunConfig, sigma: float) -> samplers.SamplerConfig:
    gamma = cfg.gamma
    if gamma is None and cfg.sampler in ("lwsgs", "sr-split"):
        rho = cfg.rho2_2 if cfg.sampler == "sr-split" else cfg.rho2
        gamma = cfg.gamma_factor * samplers.max_step_size(cfg.beta, 2.0, rho)
    return samplers.SamplerConfig(
        beta=cfg.beta, rho2=cfg.rho2, sigma=sigma, n_mc=cfg.n_mc, n_bi=cfg.n_bi,
        gamma=gamma, rho1_2=cfg.rho1_2, rho2_2=cfg.rho2_2, thin=cfg.thin,
        seed=cfg.seed, store_samples=cfg.store_samples, track_z=cfg.track_z,
    )


def _denoiser_schedule(cfg: RunConfig, base, shape):
    """Optional decreasing-strength schedule, frozen after burn-in."""
    if cfg.nu_start is None:
        return None
    nus = samplers.log_nu_schedule(cfg.nu_start, cfg.nu_end, cfg.n_bi, cfg.n_mc)
    distinct = {float(v) for v in nus}
    if isinstance(base, Plugin):
        cache = {v: replace(base, nu=v) for v in distinct}
    elif isinstance(base, SymmetricConv):
        cache = {v: SymmetricConv(gaussian_kernel(base.kernel.shape[0], v), base.eps0)
                 for v in distinct}
    elif isinstance(base, TransformShrink):
        eps0 = min(max(1.0 - float(base.gains.max()), 1e-6), 0.999)
        cache = {v: TransformShrink(dct_lowpass_gains(shape[0], shape[1], v, eps0))
                 for v in distinct}
    else:
        raise RunConfigError("strength schedule unsupported for this denoiser")
    table = [cache[float(v)] for v in nus]
    return lambda t: table[min(t, len(table) - 1)]


def _run_chains(cfg: RunConfig, scfg, y, op, d, schedule):
    """Run cfg.chains independent chains; merge summaries in chain order."""
    probe = _probe_arg(cfg.probe)

    def one(idx: int):
        if cfg.sampler == "lwsgs":
            return samplers.run_lwsgs(scfg, y, op, d, probe=probe, chain_index=idx,
                                      denoiser_schedule=schedule)
        if cfg.sampler == "red-ula":
            return samplers.run_red_ula(scfg, y, op, d, probe=probe, chain_index=idx)
        if cfg.sampler == "pnp-ula":
            return samplers.run_pnp_ula(scfg, y, op, d, box=(cfg.box_lo, cfg.box_hi),
                                        lam=cfg.pnp_lambda, probe=probe, chain_index=idx)
        if cfg.sampler == "sr-split":
            return samplers.run_sr_split(scfg, y, op, d, probe=probe, chain_index=idx)
        raise RunConfigError(f"unknown sampler {cfg.sampler!r}")

    if cfg.chains == 1:
        return one(0)
    with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
        results = list(pool.map(one, range(cfg.chains)))
    merged = results[0]
    for summary in results[1:]:
        merged = merged.merge(summary)
    return merged


def _metric_rows(truth: ImageField, obs: ImageField, summary) -> list[list]:
    mean_x = summary.mean_x
    rows: list[list] = [
        ["psnr_mean_vs_truth", diagnostics.psnr(truth, mean_x)],
        ["ssim_mean_vs_truth", _safe_ssim(truth, mean_x)],
        ["psnr_mean_vs_obs", diagnostics.psnr(obs, mean_x)],
        ["ssim_mean_vs_obs", _safe_ssim(obs, mean_x)],
        ["psnr_obs_vs_truth", diagnostics.psnr(truth, obs)],
        ["ssim_obs_vs_truth", _safe_ssim(truth, obs)],
    ]
    iat_val, reliable, probe_px = _median_probe_iat(summary)
    rows.append(["median_probe_pixel", -1 if probe_px is None else probe_px])
    rows.append(["iat_median_probe", float("nan") if iat_val is None else iat_val])
    rows.append(["iat_reliable", int(reliable)])
    if summary.projection_fraction is not None:
        rows.append(["projection_fraction", summary.projection_fraction])
    return rows


def _safe_ssim(a: ImageField, b: ImageField) -> float:
    try:
        return diagnostics.ssim(a, b)
    except diagnostics.MetricError:
        return float("nan")


def _median_probe_iat(summary):
    if summary.traces is None or summary.traces.shape[1] < 1000:
        return None, False, None
    traces = {int(i): summary.traces[k] for k, i in enumerate(summary.probe_indices)}
    try:
        pixel = diagnostics.median_variance_probe(traces)
        value = diagnostics.iat(traces[pixel])
    except (diagnostics.DegenerateSeriesError, diagnostics.MetricError):
        return None, False, None
    return value, value >= 1.0, pixel


# ---------------------------------------------------------------------------
# subcommand: sample (full run)


def run_task(cfg: RunConfig) -> dict:
    """Simulate the degradation, run the configured sampler, write artifacts.

    Returns the manifest dict; on failure writes an error manifest into the
    output directory and re-raises.
    """
    cfg.validate()
    if cfg.input is None or cfg.output is None:
        raise RunConfigError("sample runs need input and output set")
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "status": "running",
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "divergence": None,
    }
    t0 = time.perf_counter()
    try:
        truth = load_image(cfg.input)
        op = build_operator(cfg, truth.shape)
        sigma = sigma_from_snr(truth, op, cfg.snr_db)
        y = degrade(truth, op, NoiseModel(sigma), RngStream(cfg.seed, stream=_NOISE_STREAM))
        d = parse_denoiser_spec(cfg.denoiser, truth.shape)
        scfg = _sampler_config(cfg, sigma)
        schedule = _denoiser_schedule(cfg, d, truth.shape)
        summary = _run_chains(cfg, scfg, y, op, d, schedule)

        obs = _observation_image(y, op, truth.shape)
        std_img = ImageField(np.sqrt(summary.var_x.data))
        write_rfi1(summary.mean_x, outdir / "mean.rfi1")
        write_rfi1(std_img, outdir / "std.rfi1")
        write_rfi1(obs, outdir / "observation.rfi1")
        write_rfi1(y, outdir / "measurement.rfi1")
        if truth.channels in (1, 3):
            write_png(summary.mean_x, outdir / "mean.png")
            amax = float(std_img.data.max())
            write_png(std_img if amax == 0 else ImageField(std_img.data / amax),
                      outdir / "std.png")
            write_png(obs, outdir / "observation.png")

        _write_csv(outdir / "metrics.csv", ["metric", "value"],
                   _metric_rows(truth, obs, summary))
        if summary.traces is not None:
            header = ["iteration"] + [f"px{int(i)}" for i in summary.probe_indices]
            body = ([cfg.n_bi + j] + list(summary.traces[:, j])
                    for j in range(summary.traces.shape[1]))
            _write_csv(outdir / "traces.csv", header, body)
        if summary.samples:
            sdir = outdir / "samples"
            sdir.mkdir(exist_ok=True)
            for i, s in enumerate(summary.samples):
                write_rfi1(s, sdir / f"sample_{i:05d}.rfi1")

        manifest.update(
            status="ok",
            sigma=sigma,
            gamma_used=summary.gamma_used,
            gamma_bound=summary.gamma_bound,
            gamma_verified=summary.gamma_verified,
            kept_samples=summary.kept_samples,
            projection_fraction=summary.projection_fraction,
            wall_seconds=time.perf_counter() - t0,
        )
        _write_manifest(outdir, manifest)
        return manifest
    except Exception as exc:
        manifest["status"] = "error"
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, samplers.DivergenceError):
            manifest["divergence"] = {"iteration": exc.iteration}
        manifest["wall_seconds"] = time.perf_counter() - t0
        _write_manifest(outdir, manifest)
        raise


# ---------------------------------------------------------------------------
# subcommand: simulate (degradation only)


def run_simulate(cfg: RunConfig) -> dict:
    cfg.validate()
    if cfg.input is None or cfg.output is None:
        raise RunConfigError("simulate needs input and output set")
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"status": "running", "config": cfg.to_dict(), "seed": cfg.seed}
    try:
        truth = load_image(cfg.input)
        op = build_operator(cfg, truth.shape)
        sigma = sigma_from_snr(truth, op, cfg.snr_db)
        y = degrade(truth, op, NoiseModel(sigma), RngStream(cfg.seed, stream=_NOISE_STREAM))
        obs = _observation_image(y, op, truth.shape)
        write_rfi1(y, outdir / "measurement.rfi1")
        write_rfi1(obs, outdir / "observation.rfi1")
        if truth.channels in (1, 3):
            write_png(obs, outdir / "observation.png")
        manifest.update(status="ok", sigma=sigma,
                        measurement_shape=list(y.shape))
        _write_manifest(outdir, manifest)
        return manifest
    except Exception as exc:
        manifest["status"] = "error"
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        _write_manifest(outdir, manifest)
        raise


# ---------------------------------------------------------------------------
# subcommand: verify-denoiser


def run_verify_denoiser(args) -> int:
    shape = (args.patch_size, args.patch_size, 1)
    d = parse_denoiser_spec(args.denoiser, shape)
    rng = RngStream(args.seed, stream=_PATCH_STREAM)
    patches = []
    if args.input is not None:
        img = load_image(args.input)
        if img.height < args.patch_size or img.width < args.patch_size:
            raise RunConfigError("input image smaller than the patch size")
        for _ in range(args.patches):
            i = int(rng.integers(img.height - args.patch_size + 1, 1)[0])
            j = int(rng.integers(img.width - args.patch_size + 1, 1)[0])
            c = int(rng.integers(img.channels, 1)[0])
            patch = img.data[i : i + args.patch_size, j : j + args.patch_size, c : c + 1]
            patches.append(ImageField(patch.copy()))
    else:
        for _ in range(args.patches):
            patches.append(ImageField(rng.uniform(shape)))
    report = verify_red_conditions(d, patches, eps=args.eps)
    rows = [
        ["nmse_lh1", report.nmse_lh1],
        ["nmse_lh2", report.nmse_lh2],
        ["nmse_js", report.nmse_js],
        ["msr", report.msr],
        ["patch_count", report.patch_count],
        ["probe_epsilon", report.probe_epsilon],
    ]
    if args.output:
        _write_csv(args.output, ["metric", "value"], rows)
    else:
        sys.stdout.write("metric,value\n")
        for name, value in rows:
            sys.stdout.write(f"{name},{_fmt(value)}\n")
    return 0


# ---------------------------------------------------------------------------
# subcommand: oracle-check


def run_oracle_check(args) -> int:
    """Analytic step-size sweep: bias W2^2, its bound, and the contraction rate."""
    size = args.size
    shape = (size, size, 1)
    kernel = gaussian_kernel(args.kernel_size, args.kernel_std)
    op = Circulant(kernel)
    d = SymmetricConv(kernel=gaussian_kernel(3, 0.8), eps0=args.eps0)
    truth = synthetic_image(size, size, 1, seed=args.seed)
    sigma = args.sigma
    y = degrade(truth, op, NoiseModel(sigma), RngStream(args.seed, stream=_NOISE_STREAM))
    W = dense_denoiser_matrix(d, shape)
    m_g, M_g = d.hessian_bounds(size, size)
    beta, rho2 = args.beta, args.rho2
    solver = samplers.build_solver(op, shape, sigma, rho2)
    gamma_max = samplers.max_step_size(beta, M_g, rho2, m_g=m_g)
    target = axda_marginal(W, beta, rho2, op, sigma, y.ravel(), shape, which="joint")
    rows = []
    for k in range(args.levels):
        gamma = gamma_max / 2**k
        law = lwsgs_stationary(W, beta, rho2, gamma, op, sigma, y.ravel(), shape)
        w2sq = w2_gaussians(target, law.joint) ** 2
        inputs = BoundInputs(n=size * size, beta=beta, rho2=rho2, gamma=gamma,
                             m_g=m_g, M_g=M_g, q_inv_norm=solver.q_inv_norm)
        bound = evaluate_bounds(inputs, t=1, w2_init=0.0, which="bias")["bias_rhs"]
        rows.append([gamma, w2sq, bound, 1.0 - gamma * beta * m_g])
    header = ["gamma", "bias_w2_sq", "bias_bound", "contraction_rate"]
    if args.output:
        _write_csv(args.output, header, rows)
    else:
        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(_fmt(v) for v in row) + "\n")
    return 0


# ---------------------------------------------------------------------------
# subcommand: metrics


def run_metrics(args) -> int:
    ref = load_image(args.reference)
    test = load_image(args.test)
    iat_val, reliable, acf_head = None, True, ()
    if args.trace:
        series = _read_trace_column(args.trace, args.trace_column)
        try:
            iat_val = diagnostics.iat(series)
            reliable = iat_val >= 1.0
            acf_head = tuple(diagnostics.acf(series, min(10, series.size - 1)))
        except diagnostics.DegenerateSeriesError:
            iat_val, reliable = None, False
    report = diagnostics.MetricReport(
        psnr_db=diagnostics.psnr(ref, test, peak=args.peak),
        ssim=_safe_ssim(ref, test),
        iat=iat_val,
        iat_reliable=reliable,
        acf_head=acf_head,
    )
    rows: list[list] = [["psnr", report.psnr_db], ["ssim", report.ssim]]
    if args.trace:
        rows.append(["iat", float("nan") if report.iat is None else report.iat])
        rows.append(["iat_reliable", int(report.iat_reliable)])
        rows.extend([f"acf_{k}", v] for k, v in enumerate(report.acf_head))
    if args.output:
        _write_csv(args.output, ["metric", "value"], rows)
    else:
        sys.stdout.write("metric,value\n")
        for name, value in rows:
            sys.stdout.write(f"{name},{_fmt(value)}\n")
    return 0


def _read_trace_column(path, column: int) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        ncols = len(header.strip().split(","))
        if not 0 <= column < ncols:
            raise RunConfigError(f"trace column {column} out of range (file has {ncols})")
        vals = [float(line.strip().split(",")[column]) for line in fh if line.strip()]
    return np.asarray(vals)


# ---------------------------------------------------------------------------
# argument parsing


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named hyperparameter preset")
    p.add_argument("--input", help="input image (PNG or RFI1)")
    p.add_argument("--output", help="output directory")
    p.add_argument("--task", choices=["deblur", "inpaint", "superres"])
    p.add_argument("--sampler", choices=["lwsgs", "red-ula", "pnp-ula", "sr-split"])
    p.add_argument("--kernel-size", type=int, dest="kernel_size")
    p.add_argument("--kernel-std", type=float, dest="kernel_std")
    p.add_argument("--mask-fraction", type=float, dest="mask_fraction")
    p.add_argument("--sr-factor", type=int, dest="sr_factor")
    p.add_argument("--snr-db", type=float, dest="snr_db")
    p.add_argument("--beta", type=float)
    p.add_argument("--rho2", type=float)
    p.add_argument("--rho1-2", type=float, dest="rho1_2")
    p.add_argument("--rho2-2", type=float, dest="rho2_2")
    p.add_argument("--gamma", type=float)
    p.add_argument("--gamma-factor", type=float, dest="gamma_factor")
    p.add_argument("--n-mc", type=int, dest="n_mc")
    p.add_argument("--n-bi", type=int, dest="n_bi")
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--store-samples", action="store_const", const=True, dest="store_samples")
    p.add_argument("--track-z", action="store_const", const=True, dest="track_z")
    p.add_argument("--probe", help="'auto', 'all', 'none' or ';'-joined flat indices")
    p.add_argument("--denoiser", help="symconv:..., dctshrink:... or plugin:<path>,nu=...")
    p.add_argument("--nu-start", type=float, dest="nu_start")
    p.add_argument("--nu-end", type=float, dest="nu_end")
    p.add_argument("--box-lo", type=float, dest="box_lo")
    p.add_argument("--box-hi", type=float, dest="box_hi")
    p.add_argument("--pnp-lambda", type=float, dest="pnp_lambda")


_RUN_KEYS = tuple(
    k for k in (
        "input", "output", "task", "sampler", "kernel_size", "kernel_std",
        "mask_fraction", "sr_factor", "snr_db", "beta", "rho2", "rho1_2", "rho2_2",
        "gamma", "gamma_factor", "n_mc", "n_bi", "thin", "seed", "chains",
        "store_samples", "track_z", "probe", "denoiser", "nu_start", "nu_end",
        "box_lo", "box_hi", "pnp_lambda",
    )
)


def _config_from_args(args) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _RUN_KEYS if getattr(args, k, None) is not None}
    return build_run_config(preset=args.preset, file_values=file_values, overrides=overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redsgs",
        description="Posterior sampling for denoiser-regularized imaging inverse problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate the degradation only")
    _add_run_flags(p_sim)

    p_sample = sub.add_parser("sample", help="simulate, sample, score and write artifacts")
    _add_run_flags(p_sample)

    p_ver = sub.add_parser("verify-denoiser", help="score a denoiser on the prior conditions")
    p_ver.add_argument("--denoiser", required=True)
    p_ver.add_argument("--patches", type=int, default=100)
    p_ver.add_argument("--patch-size", type=int, default=16, dest="patch_size")
    p_ver.add_argument("--input", help="optional image to crop patches from")
    p_ver.add_argument("--eps", type=float, default=None, help="finite-difference step")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--output", help="CSV path (default: stdout)")

    p_oc = sub.add_parser("oracle-check", help="analytic step-size sweep (CSV)")
    p_oc.add_argument("--size", type=int, default=8)
    p_oc.add_argument("--levels", type=int, default=6)
    p_oc.add_argument("--beta", type=float, default=1.0)
    p_oc.add_argument("--rho2", type=float, default=1.0)
    p_oc.add_argument("--sigma", type=float, default=0.5)
    p_oc.add_argument("--kernel-size", type=int, default=5, dest="kernel_size")
    p_oc.add_argument("--kernel-std", type=float, default=1.0, dest="kernel_std")
    p_oc.add_argument("--eps0", type=float, default=0.05)
    p_oc.add_argument("--seed", type=int, default=0)
    p_oc.add_argument("--output", help="CSV path (default: stdout)")

    p_met = sub.add_parser("metrics", help="score a restored image against a reference")
    p_met.add_argument("--reference", required=True)
    p_met.add_argument("--test", required=True)
    p_met.add_argument("--peak", type=float, default=1.0)
    p_met.add_argument("--trace", help="trace CSV for IAT")
    p_met.add_argument("--trace-column", type=int, default=1, dest="trace_column")
    p_met.add_argument("--output", help="CSV path (default: stdout)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sample":
            run_task(_config_from_args(args))
            return 0
        if args.command == "simulate":
            run_simulate(_config_from_args(args))
            return 0
        if args.command == "verify-denoiser":
            return run_verify_denoiser(args)
        if args.command == "oracle-check":
            return run_oracle_check(args)
        if args.command == "metrics":
            return run_metrics(args)
        parser.error(f"unknown command {args.command!r}")
    except Exception as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
