"""Subprocess denoiser protocol: one RFI1 frame in, one frame out."""

import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from redsgs import ImageField, Plugin, denoise_apply
from redsgs.denoise import DenoiserError

from conftest import random_image


def make_plugin(tmp_path, body: str, name="plug.py") -> Plugin:
    script = tmp_path / name
    script.write_text(textwrap.dedent(body))
    return Plugin(command=(sys.executable, str(script)), nu=0.25)


GOOD_PLUGIN = """
    import sys
    sys.path.insert(0, {srcpath!r})
    from redsgs.images import read_rfi1, write_rfi1, ImageField

    frame = read_rfi1(sys.stdin.buffer)
    line = sys.stdin.buffer.readline().decode()
    assert line.startswith("nu="), line
    nu = float(line[3:])
    out = ImageField(frame.data * (1.0 - nu))
    write_rfi1(out, sys.stdout.buffer)
"""


def src_path():
    import redsgs

    return os.path.dirname(os.path.dirname(redsgs.__file__))


def test_plugin_roundtrip_applies_strength(tmp_path):
    plug = make_plugin(tmp_path, GOOD_PLUGIN.format(srcpath=src_path()))
    x = random_image((5, 6, 2), seed=1)
    out = denoise_apply(plug, x)
    assert np.abs(out.data - 0.75 * x.data).max() < 1e-15


def test_plugin_nonzero_exit_raises_with_stderr(tmp_path):
    plug = make_plugin(tmp_path, """
        import sys
        sys.stderr.write("boom: bad weights")
        sys.exit(3)
    """)
    with pytest.raises(DenoiserError, match="boom"):
        denoise_apply(plug, random_image((4, 4, 1)))


def test_plugin_malformed_frame_raises(tmp_path):
    plug = make_plugin(tmp_path, """
        import sys
        sys.stdout.write("not an image at all")
    """)
    with pytest.raises(DenoiserError, match="malformed"):
        denoise_apply(plug, random_image((4, 4, 1)))


def test_plugin_wrong_shape_raises(tmp_path):
    plug = make_plugin(tmp_path, f"""
        import sys
        sys.path.insert(0, {src_path()!r})
        from redsgs.images import read_rfi1, write_rfi1, ImageField
        import numpy as np
        frame = read_rfi1(sys.stdin.buffer)
        write_rfi1(ImageField(np.zeros((2, 2, 1))), sys.stdout.buffer)
    """)
    with pytest.raises(DenoiserError, match="shape"):
        denoise_apply(plug, random_image((4, 4, 1)))


def test_plugin_nonfinite_output_raises(tmp_path):
    plug = make_plugin(tmp_path, """
        import sys, struct
        data = sys.stdin.buffer.read()
        header = b"RFI1 2 2 1\\n"
        payload = struct.pack("<4d", 1.0, float("nan"), 0.0, 0.0)
        sys.stdout.buffer.write(header + payload)
    """)
    with pytest.raises(DenoiserError):
        denoise_apply(plug, random_image((2, 2, 1)))


def test_plugin_missing_executable():
    plug = Plugin(command=("/nonexistent/denoiser-binary",), nu=0.1)
    with pytest.raises(DenoiserError):
        denoise_apply(plug, random_image((2, 2, 1)))
