"""Image containers and image I/O.

Pixel data lives in ``ImageField``: an (H, W, C) float64 grid in row-major
order. Values are nominally in [0, 1] but are deliberately unconstrained so
that sampler states can wander outside the display range; the only hard
invariant is finiteness.

Two file formats are supported:

* ``RFI1`` -- a lossless float interchange format: one ASCII header line
  ``"RFI1 <height> <width> <channels>\\n"`` followed by the row-major
  IEEE-754 little-endian float64 payload.
* 8-bit PNG (grayscale or RGB) for display artifacts; values are clamped
  to [0, 1] on write.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ImageField",
    "read_rfi1",
    "write_rfi1",
    "read_png",
    "write_png",
    "load_image",
    "synthetic_image",
]

_RFI1_MAGIC = b"RFI1"


class ImageError(ValueError):
    """Raised for malformed image data or failed image I/O."""


@dataclass(frozen=True, eq=False)
class ImageField:
    """A real-valued (height, width, channels) pixel grid.

    The wrapped array is float64, C-contiguous and finite. Instances are
    immutable; operations return new fields.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ImageError(f"expected (H, W, C) data, got shape {np.shape(self.data)}")
        if not np.isfinite(arr).all():
            raise ImageError("image data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def ravel(self) -> np.ndarray:
        """Row-major flattened copy of the pixel data."""
        return self.data.ravel().copy()

    @staticmethod
    def from_flat(flat: np.ndarray, height: int, width: int, channels: int) -> "ImageField":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != height * width * channels:
            raise ImageError(
                f"flat data of length {flat.size} does not fill {height}x{width}x{channels}"
            )
        return ImageField(flat.reshape(height, width, channels))

    @staticmethod
    def zeros(height: int, width: int, channels: int = 1) -> "ImageField":
        return ImageField(np.zeros((height, width, channels)))

    @staticmethod
    def full(height: int, width: int, value: float, channels: int = 1) -> "ImageField":
        return ImageField(np.full((height, width, channels), float(value)))


def write_rfi1(image: ImageField, target) -> None:
    """Write one RFI1 frame to a path or binary file object."""
    header = f"RFI1 {image.height} {image.width} {image.channels}\n".encode("ascii")
    payload = image.data.astype("<f8").tobytes(order="C")
    if hasattr(target, "write"):
        target.write(header)
        target.write(payload)
    else:
        with open(target, "wb") as fh:
            fh.write(header)
            fh.write(payload)


def read_rfi1(source) -> ImageField:
    """Read one RFI1 frame from a path or binary file object."""
    if hasattr(source, "read"):
        return _read_rfi1_stream(source)
    with open(source, "rb") as fh:
        return _read_rfi1_stream(fh)


def _read_rfi1_stream(fh) -> ImageField:
    header = bytearray()
    while not header.endswith(b"\n"):
        b = fh.read(1)
        if not b:
            raise ImageError("truncated RFI1 header")
        header += b
        if len(header) > 128:
            raise ImageError("oversized RFI1 header")
    parts = bytes(header).split()
    if len(parts) != 4 or parts[0] != _RFI1_MAGIC:
        raise ImageError(f"bad RFI1 header: {bytes(header)!r}")
    try:
        h, w, c = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise ImageError(f"bad RFI1 dimensions: {bytes(header)!r}") from exc
    if h <= 0 or w <= 0 or c <= 0:
        raise ImageError(f"nonpositive RFI1 dimensions {h}x{w}x{c}")
    n = h * w * c
    payload = fh.read(8 * n)
    if len(payload) != 8 * n:
        raise ImageError(f"RFI1 payload truncated: expected {8 * n} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f8")
    if not np.isfinite(flat).all():
        raise ImageError("RFI1 payload contains non-finite values")
    return ImageField.from_flat(flat, h, w, c)


def rfi1_bytes(image: ImageField) -> bytes:
    buf = io.BytesIO()
    write_rfi1(image, buf)
    return buf.getvalue()


def write_png(image: ImageField, path) -> None:
    """Write an 8-bit grayscale/RGB PNG, clamping values to [0, 1]."""
    from PIL import Image

    arr = np.clip(image.data, 0.0, 1.0)
    arr8 = np.round(arr * 255.0).astype(np.uint8)
    if image.channels == 1:
        Image.fromarray(arr8[:, :, 0], mode="L").save(path, format="PNG")
    elif image.channels == 3:
        Image.fromarray(arr8, mode="RGB").save(path, format="PNG")
    else:
        raise ImageError(f"PNG supports 1 or 3 channels, got {image.channels}")


def read_png(path) -> ImageField:
    """Read an 8-bit PNG into [0, 1] floats (grayscale stays 1-channel)."""
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if ("A" in img.mode or len(img.mode) > 2) else "L")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return ImageField(arr)


def load_image(path) -> ImageField:
    """Load a PNG or RFI1 image based on file content."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _RFI1_MAGIC:
        return read_rfi1(path)
    return read_png(path)


def synthetic_image(height: int, width: int, channels: int = 1, seed: int = 0) -> ImageField:
    """Deterministic structured test image: smooth bumps, a gradient and edges.

    Convenience for demos and tests; values lie in [0, 1].
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    out = np.empty((height, width, channels))
    for c in range(channels):
        img = 0.25 + 0.3 * xx + 0.1 * yy
        for _ in range(4):
            cy, cx = rng.random(2)
            s = 0.05 + 0.15 * rng.random()
            amp = 0.3 + 0.4 * rng.random()
            img = img + amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s**2))
        # a hard-edged block so deconvolution has structure to recover
        r0, c0 = int(0.55 * height), int(0.15 * width)
        img[r0 : r0 + max(2, height // 6), c0 : c0 + max(2, width // 5)] += 0.35
        lo, hi = img.min(), img.max()
        out[:, :, c] = (img - lo) / (hi - lo)
    return ImageField(out)
