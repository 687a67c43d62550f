import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redsgs import ImageField, read_png, read_rfi1, synthetic_image, write_png, write_rfi1
from redsgs.images import ImageError, rfi1_bytes


def test_imagefield_shape_and_flat_roundtrip():
    img = ImageField(np.arange(24, dtype=float).reshape(2, 3, 4))
    assert (img.height, img.width, img.channels) == (2, 3, 4)
    again = ImageField.from_flat(img.ravel(), 2, 3, 4)
    assert np.array_equal(again.data, img.data)


def test_imagefield_rejects_nonfinite():
    bad = np.ones((2, 2, 1))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ImageError):
        ImageField(bad)
    bad[0, 0, 0] = np.inf
    with pytest.raises(ImageError):
        ImageField(bad)


def test_imagefield_rejects_wrong_flat_length():
    with pytest.raises(ImageError):
        ImageField.from_flat(np.zeros(5), 2, 2, 2)


def test_2d_input_promoted_to_single_channel():
    img = ImageField(np.zeros((4, 5)))
    assert img.shape == (4, 5, 1)


def test_rfi1_header_and_payload_layout():
    img = ImageField(np.arange(6, dtype=float).reshape(1, 2, 3))
    blob = rfi1_bytes(img)
    header, payload = blob.split(b"\n", 1)
    assert header == b"RFI1 1 2 3"
    assert payload == np.arange(6, dtype="<f8").tobytes()


def test_rfi1_file_roundtrip(tmp_path):
    img = synthetic_image(7, 5, 3, seed=1)
    path = tmp_path / "img.rfi1"
    write_rfi1(img, path)
    back = read_rfi1(path)
    assert back.shape == img.shape
    assert np.array_equal(back.data, img.data)


@pytest.mark.parametrize(
    "blob",
    [
        b"RFI2 1 1 1\n" + b"\x00" * 8,            # bad magic
        b"RFI1 1 1\n" + b"\x00" * 8,              # missing dim
        b"RFI1 0 1 1\n",                           # nonpositive dim
        b"RFI1 2 2 1\n" + b"\x00" * 8,            # truncated payload
        b"RFI1 a b c\n" + b"\x00" * 8,            # non-integer dims
    ],
)
def test_rfi1_rejects_malformed(blob):
    with pytest.raises(ImageError):
        read_rfi1(io.BytesIO(blob))


def test_rfi1_rejects_nonfinite_payload():
    payload = np.array([np.nan], dtype="<f8").tobytes()
    with pytest.raises(ImageError):
        read_rfi1(io.BytesIO(b"RFI1 1 1 1\n" + payload))


@pytest.mark.parametrize("channels", [1, 3])
def test_png_roundtrip_8bit(tmp_path, channels):
    img = synthetic_image(9, 11, channels, seed=2)
    path = tmp_path / "img.png"
    write_png(img, path)
    back = read_png(path)
    assert back.shape == img.shape
    # 8-bit quantization: half a level of error at most
    assert np.abs(back.data - img.data).max() <= 0.5 / 255 + 1e-12


def test_png_rejects_odd_channel_count(tmp_path):
    with pytest.raises(ImageError):
        write_png(ImageField(np.zeros((4, 4, 2))), tmp_path / "x.png")


def test_synthetic_image_deterministic_and_in_range():
    a = synthetic_image(16, 16, 1, seed=5)
    b = synthetic_image(16, 16, 1, seed=5)
    assert np.array_equal(a.data, b.data)
    assert a.data.min() >= 0.0 and a.data.max() <= 1.0


@settings(max_examples=20, deadline=None)
@given(
    h=st.integers(1, 8),
    w=st.integers(1, 8),
    c=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
)
def test_rfi1_stream_roundtrip_property(h, w, c, seed):
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    img = ImageField(rng.normal(size=(h, w, c)))
    back = read_rfi1(io.BytesIO(rfi1_bytes(img)))
    assert np.array_equal(back.data, img.data)
