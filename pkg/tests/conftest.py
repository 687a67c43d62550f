import numpy as np
import pytest

from redsgs import ImageField, RngStream


class ZeroNoise:
    """rng stub returning all-zero 'Gaussian' draws (deterministic centers)."""

    def standard_normal(self, shape=()):
        return np.zeros(shape)


@pytest.fixture
def zero_rng():
    return ZeroNoise()


def random_image(shape, seed=0, lo=0.0, hi=1.0):
    rng = RngStream(seed, stream=0xF1157)
    return ImageField(lo + (hi - lo) * rng.uniform(shape))


def textured_image(size: int, seed: int = 42) -> ImageField:
    """Structured image with stripes: blur actually destroys information."""
    from redsgs import synthetic_image

    base = synthetic_image(size, size, 1, seed=seed).data[:, :, 0]
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    tex = base.copy()
    tex += 0.22 * np.sin(2 * np.pi * xx / 6.0) * (yy < size // 2)
    tex += 0.22 * np.sin(2 * np.pi * (xx + yy) / 8.0) * (yy >= size // 2)
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return ImageField(tex[:, :, None])
