import json
import os
import sys

import numpy as np
import pytest

from redsgs import ImageField, synthetic_image, write_png, write_rfi1
from redsgs.cli import build_operator, main, parse_denoiser_spec, run_task
from redsgs.config import (
    PRESETS,
    RunConfig,
    RunConfigError,
    SEED_ENV_VAR,
    build_run_config,
    parse_config_file,
)
from redsgs.denoise import Plugin, SymmetricConv, TransformShrink


# --- config file parsing --------------------------------------------------


def test_parse_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# deblur smoke run\n"
        "task = deblur\n"
        "beta = 0.5   # inline comment\n"
        "\n"
        "n_mc = 250\n"
        "store_samples = true\n"
    )
    values = parse_config_file(cfg)
    assert values == {"task": "deblur", "beta": "0.5", "n_mc": "250",
                      "store_samples": "true"}


def test_parse_config_file_rejects_garbage(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("this line has no equals sign\n")
    with pytest.raises(RunConfigError, match="key = value"):
        parse_config_file(cfg)


def test_build_run_config_precedence(tmp_path):
    file_values = {"beta": "0.25", "n_mc": "4000"}
    cfg = build_run_config(
        preset="ffhq-deblur",
        file_values=file_values,
        overrides={"n_mc": 4500},
        env={},
    )
    assert cfg.task == "deblur"          # from preset
    assert cfg.rho2 == 6e-8              # from preset
    assert cfg.beta == 0.25              # file overrides preset
    assert cfg.n_mc == 4500              # flag overrides file


def test_seed_env_var_wins(tmp_path):
    cfg = build_run_config(overrides={"seed": 5}, env={SEED_ENV_VAR: "99"})
    assert cfg.seed == 99


def test_unknown_keys_rejected():
    with pytest.raises(RunConfigError, match="unknown config key"):
        build_run_config(file_values={"bogus": "1"}, env={})


def test_presets_all_validate():
    for name in PRESETS:
        cfg = build_run_config(preset=name, env={})
        cfg.validate()


def test_validation_fail_fast():
    with pytest.raises(RunConfigError):
        RunConfig(task="sharpen").validate()
    with pytest.raises(RunConfigError):
        RunConfig(task="superres", sampler="lwsgs").validate()
    with pytest.raises(RunConfigError):
        RunConfig(kernel_size=4).validate()
    with pytest.raises(RunConfigError):
        RunConfig(mask_fraction=1.5).validate()
    with pytest.raises(RunConfigError):
        RunConfig(n_mc=10, n_bi=10).validate()
    with pytest.raises(RunConfigError):
        RunConfig(nu_start=1.0).validate()


# --- denoiser spec --------------------------------------------------------


def test_denoiser_spec_symconv():
    d = parse_denoiser_spec("symconv:size=3,std=0.7,eps0=0.1")
    assert isinstance(d, SymmetricConv)
    assert d.kernel.shape == (3, 3)
    assert d.eps0 == 0.1


def test_denoiser_spec_dctshrink_needs_shape():
    with pytest.raises(RunConfigError):
        parse_denoiser_spec("dctshrink:strength=2.0")
    d = parse_denoiser_spec("dctshrink:strength=2.0,eps0=0.05", shape=(8, 8, 1))
    assert isinstance(d, TransformShrink)
    assert d.gains.shape == (8, 8)


def test_denoiser_spec_plugin():
    d = parse_denoiser_spec("plugin:/usr/bin/denoise,nu=0.7")
    assert isinstance(d, Plugin)
    assert d.command == ("/usr/bin/denoise",)
    assert d.nu == 0.7


def test_denoiser_spec_unknown():
    with pytest.raises(RunConfigError):
        parse_denoiser_spec("wavelet:foo=1")


# --- operator building ----------------------------------------------------


def test_build_operator_mask_fraction():
    cfg = RunConfig(task="inpaint", mask_fraction=0.8, seed=3)
    op = build_operator(cfg, (10, 10, 1))
    assert op.m == 20  # 20% of 100 kept


def test_build_operator_superres_divisibility():
    cfg = RunConfig(task="superres", sampler="sr-split", sr_factor=4,
                    rho1_2=0.2, rho2_2=1.0)
    with pytest.raises(RunConfigError):
        build_operator(cfg, (10, 10, 1))


# --- end-to-end runs -------------------------------------------------------


def _write_input(tmp_path, size=16):
    img = synthetic_image(size, size, 1, seed=2)
    path = tmp_path / "truth.rfi1"
    write_rfi1(img, path)
    return path


def sample_args(tmp_path, outdir, extra=()):
    return [
        "sample",
        "--input", str(_write_input(tmp_path)),
        "--output", str(outdir),
        "--task", "deblur",
        "--kernel-size", "5",
        "--kernel-std", "1.2",
        "--beta", "1.0",
        "--rho2", "0.5",
        "--n-mc", "150",
        "--n-bi", "30",
        "--seed", "11",
        "--denoiser", "symconv:size=3,std=0.8,eps0=0.05",
        *extra,
    ]


def test_sample_run_writes_artifacts_and_manifest(tmp_path):
    out = tmp_path / "run1"
    assert main(sample_args(tmp_path, out)) == 0
    for name in ["mean.rfi1", "std.rfi1", "observation.rfi1", "measurement.rfi1",
                 "mean.png", "std.png", "metrics.csv", "traces.csv", "manifest.json"]:
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 11
    assert manifest["gamma_verified"] is True
    assert manifest["divergence"] is None
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "metric,value"


def test_sample_rerun_metrics_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(sample_args(tmp_path, out1)) == 0
    assert main(sample_args(tmp_path, out2)) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert (out1 / "traces.csv").read_bytes() == (out2 / "traces.csv").read_bytes()
    assert (out1 / "mean.rfi1").read_bytes() == (out2 / "mean.rfi1").read_bytes()


def test_sample_multi_chain_merges_deterministically(tmp_path):
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    assert main(sample_args(tmp_path, out1, extra=["--chains", "3"])) == 0
    assert main(sample_args(tmp_path, out2, extra=["--chains", "3"])) == 0
    assert (out1 / "mean.rfi1").read_bytes() == (out2 / "mean.rfi1").read_bytes()
    m = json.loads((out1 / "manifest.json").read_text())
    assert m["kept_samples"] == 3 * 120


def test_sample_inpaint_with_config_file(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "task = inpaint\nmask_fraction = 0.5\nbeta = 2.0\nrho2 = 0.2\n"
        "n_mc = 120\nn_bi = 20\nseed = 4\n"
        "denoiser = dctshrink:strength=8.0,eps0=0.05\n"
    )
    out = tmp_path / "inpaint"
    rc = main([
        "sample", "--config", str(cfgfile),
        "--input", str(_write_input(tmp_path)),
        "--output", str(out),
    ])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["task"] == "inpaint"
    assert manifest["config"]["beta"] == 2.0


def test_sample_error_leaves_machine_readable_manifest(tmp_path):
    out = tmp_path / "bad"
    args = sample_args(tmp_path, out)
    args[args.index("--kernel-size") + 1] = "999"  # kernel bigger than image
    rc = main(args)
    assert rc == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "error"
    assert manifest["error"]["type"]
    assert "999" in manifest["error"]["message"] or manifest["error"]["message"]


def test_seed_env_var_overrides_cli(tmp_path, monkeypatch):
    out1, out2 = tmp_path / "e1", tmp_path / "e2"
    monkeypatch.setenv(SEED_ENV_VAR, "11")
    assert main(sample_args(tmp_path, out1, extra=["--seed", "999"])) == 0
    monkeypatch.delenv(SEED_ENV_VAR)
    assert main(sample_args(tmp_path, out2)) == 0  # plain seed 11
    assert (out1 / "mean.rfi1").read_bytes() == (out2 / "mean.rfi1").read_bytes()


def test_simulate_writes_measurement(tmp_path):
    out = tmp_path / "sim"
    rc = main([
        "simulate",
        "--input", str(_write_input(tmp_path)),
        "--output", str(out),
        "--task", "deblur", "--kernel-size", "5", "--kernel-std", "1.2",
        "--seed", "3",
    ])
    assert rc == 0
    assert (out / "measurement.rfi1").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["sigma"] > 0


def test_metrics_subcommand(tmp_path, capsys):
    ref = synthetic_image(16, 16, 1, seed=1)
    test = ImageField(np.clip(ref.data + 0.05, 0, 1))
    rp, tp = tmp_path / "ref.rfi1", tmp_path / "test.rfi1"
    write_rfi1(ref, rp)
    write_rfi1(test, tp)
    assert main(["metrics", "--reference", str(rp), "--test", str(tp)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("metric,value\n")
    assert "psnr," in out and "ssim," in out


def test_verify_denoiser_subcommand(tmp_path):
    out = tmp_path / "report.csv"
    rc = main([
        "verify-denoiser",
        "--denoiser", "symconv:size=3,std=0.8,eps0=0.05",
        "--patches", "5", "--patch-size", "6", "--seed", "1",
        "--output", str(out),
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "metric,value"
    values = dict(line.split(",") for line in lines[1:])
    assert float(values["nmse_js"]) < 1e-10
    assert float(values["msr"]) <= 0.95 + 1e-6
    assert int(values["patch_count"]) == 5


def test_oracle_check_subcommand(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main([
        "oracle-check", "--size", "6", "--levels", "4",
        "--beta", "1.0", "--rho2", "1.0", "--sigma", "0.5",
        "--kernel-size", "3", "--kernel-std", "0.8",
        "--output", str(out),
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "gamma,bias_w2_sq,bias_bound,contraction_rate"
    rows = [list(map(float, line.split(","))) for line in lines[1:]]
    assert len(rows) == 4
    for gamma, w2sq, bound, rate in rows:
        assert 0 < w2sq <= bound
        assert 0 < rate < 1
    # dyadic gammas, decreasing bias
    assert all(rows[i][1] > rows[i + 1][1] for i in range(3))


def test_png_input_accepted(tmp_path):
    img = synthetic_image(16, 16, 1, seed=9)
    path = tmp_path / "img.png"
    write_png(img, path)
    out = tmp_path / "png_run"
    args = sample_args(tmp_path, out)
    args[args.index("--input") + 1] = str(path)
    assert main(args) == 0


def test_metrics_subcommand_with_trace(tmp_path):
    ref = synthetic_image(16, 16, 1, seed=1)
    test = ImageField(np.clip(ref.data + 0.03, 0, 1))
    rp, tp = tmp_path / "ref.rfi1", tmp_path / "test.rfi1"
    write_rfi1(ref, rp)
    write_rfi1(test, tp)
    trace = tmp_path / "trace.csv"
    from redsgs import RngStream

    series = RngStream(5).standard_normal(2000)
    trace.write_text("iteration,px0\n" + "".join(
        f"{i},{float(v)!r}\n" for i, v in enumerate(series)))
    out = tmp_path / "metrics.csv"
    rc = main(["metrics", "--reference", str(rp), "--test", str(tp),
               "--trace", str(trace), "--output", str(out)])
    assert rc == 0
    values = dict(line.split(",") for line in out.read_text().splitlines()[1:])
    assert 0.9 <= float(values["iat"]) <= 1.1
    assert values["iat_reliable"] in ("0", "1")
    assert abs(float(values["acf_0"]) - 1.0) < 1e-12
    assert "acf_10" in values


def test_sample_rgb_inpaint_end_to_end(tmp_path):
    img = synthetic_image(16, 16, 3, seed=6)
    path = tmp_path / "rgb.rfi1"
    write_rfi1(img, path)
    out = tmp_path / "rgb_run"
    rc = main([
        "sample", "--input", str(path), "--output", str(out),
        "--task", "inpaint", "--mask-fraction", "0.4",
        "--beta", "2.0", "--rho2", "0.2", "--n-mc", "120", "--n-bi", "20",
        "--seed", "8", "--denoiser", "symconv:size=3,std=0.8,eps0=0.05",
    ])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert (out / "mean.png").exists()  # 3-channel PNG path
