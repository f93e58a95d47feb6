"""Seeded random streams.

Every stream is a counter-based Philox generator keyed by ``(seed, stream)``,
and Gaussian variates come from the inverse normal CDF of uniforms so the
numbers do not depend on numpy's normal sampler.
"""
import numpy as np
from scipy.special import ndtri

# uniforms are kept away from 0 and 1 so ndtri stays finite
_UNIFORM_EPS = 2.0**-53


def make_generator(seed: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or stream < 0:
        raise ValueError(f"Seed and stream must be non-negative, got {seed}, {stream}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def standard_normal(generator: np.random.Generator, size) -> np.ndarray:
    uniform = generator.random(size)
    return ndtri(np.clip(uniform, _UNIFORM_EPS, 1.0 - _UNIFORM_EPS))


def complex_normal(generator: np.random.Generator, size) -> np.ndarray:
    """Circularly symmetric CN(0, 1) entries."""
    real = standard_normal(generator, size)
    imag = standard_normal(generator, size)
    return (real + 1j * imag) / np.sqrt(2.0)
