"""Seeded Gaussian random surfaces and their log-permeability rescaling.

Surfaces follow the usual rough-surface recipe: white noise on an
``n x n`` grid is filtered (circular convolution) with the Gaussian kernel
``exp(-2 (x^2 + y^2) / cl^2)`` and normalized to zero mean and rms ``h``.
The resulting autocorrelation is ``exp(-r^2 / cl^2)``.

Per-sample seeds
----------------
Sample ``s`` of a dataset with base seed ``S`` is drawn from
``numpy.random.Generator(PCG64(sample_seed(S, s)))`` where
``sample_seed(S, s) = mix64((S + (s + 1) * 0x9E3779B97F4A7C15) mod 2**64)``
and ``mix64`` is the SplitMix64 finalizer::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB  mod 2**64
    z =  z ^ (z >> 31)

i.e. ``sample_seed(S, s)`` is output ``s`` of a SplitMix64 stream seeded
with ``S``.  Samples therefore do not depend on generation order.

Rescaling is per sample: the extremes of *each* surface are mapped onto
``[ln Kmin, ln Kmax]``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .decomposition import SampleMatrix

__all__ = [
    "SurfaceParams",
    "FieldSample",
    "mix64",
    "sample_seed",
    "derive_seed",
    "gaussian_surface",
    "rescale_log_perm",
    "generate_field",
    "make_dataset",
]

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z):
    """SplitMix64 output function on a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_seed(seed, index):
    """Seed of sample ``index`` in the stream seeded with ``seed``."""
    if index < 0:
        raise ValueError("sample index must be nonnegative")
    return mix64((int(seed) + (int(index) + 1) * _GOLDEN_GAMMA) & _MASK64)


def derive_seed(seed, stream):
    """Independent child seed for a named purpose (train, test, ...)."""
    return sample_seed(mix64(int(seed) ^ 0x5EED5EED5EED5EED), stream)


@dataclass(frozen=True)
class SurfaceParams:
    """Grid points per side, side length, rms height, correlation length."""

    n: int = 21
    rL: float = 3.0
    h: float = 1.0
    cl: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 2:
            raise ValueError("need at least 2 grid points per side")
        if not (self.rL > 0 and self.h > 0 and self.cl > 0):
            raise ValueError("rL, h and cl must be positive")
        if not self.cl < self.rL:
            raise ValueError("correlation length must be below the side length")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class FieldSample:
    tau: np.ndarray
    mu: np.ndarray
    params: SurfaceParams
    index: int


def _gaussian_filter(n, dx, cl):
    # offsets wrapped to the nearest periodic image keep the kernel symmetric
    k = np.arange(n)
    off = np.minimum(k, n - k) * dx
    x, y = np.meshgrid(off, off, indexing="ij")
    return np.exp(-2.0 * (x**2 + y**2) / cl**2)


def gaussian_surface(params):
    """Zero-mean surface with rms exactly ``params.h``, shape (n, n)."""
    n = params.n
    rng = np.random.Generator(np.random.PCG64(params.seed))
    noise = rng.standard_normal((n, n))
    kernel = _gaussian_filter(n, params.rL / n, params.cl)
    surf = np.fft.irfft2(np.fft.rfft2(noise) * np.fft.rfft2(kernel), s=(n, n))
    surf -= surf.mean()
    rms = np.sqrt(np.mean(surf**2))
    if not rms > 0:
        raise FloatingPointError("degenerate surface")
    return surf * (params.h / rms)


def rescale_log_perm(tau, Kmin=1.0, Kmax=100.0):
    """Map ``[tau.min(), tau.max()]`` affinely onto ``[ln Kmin, ln Kmax]``."""
    if not (Kmin > 0 and Kmax > Kmin):
        raise ValueError("need Kmax > Kmin > 0")
    tau = np.asarray(tau, dtype=float)
    lo, hi = tau.min(), tau.max()
    if not hi > lo:
        raise ValueError("constant surface cannot be rescaled")
    mu = np.log(Kmax / Kmin) * (tau - lo) / (hi - lo) + np.log(Kmin)
    # keep roundoff from leaving the closed range
    return np.clip(mu, np.log(Kmin), np.log(Kmax))


def generate_field(params, index, Kmin=1.0, Kmax=100.0):
    """Sample ``index`` of the dataset defined by ``params``."""
    own = replace(params, seed=sample_seed(params.seed, index))
    tau = gaussian_surface(own)
    return FieldSample(tau, rescale_log_perm(tau, Kmin, Kmax), params, int(index))


def make_dataset(count, params, Kmin=1.0, Kmax=100.0, workers=1):
    """``count`` rescaled samples as a (n*n, count) :class:`SampleMatrix`.

    Columns hold row-major flattened fields.  ``workers > 1`` generates
    samples on a thread pool; the result does not depend on it.
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be at least 1")

    def one(s):
        return generate_field(params, s, Kmin, Kmax).mu.ravel()

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(one, range(count)))
    else:
        cols = [one(s) for s in range(count)]
    return SampleMatrix(np.stack(cols, axis=1), (params.n, params.n))
