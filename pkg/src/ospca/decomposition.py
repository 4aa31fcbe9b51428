"""Second-moment PCA, metric-aware projection and energy-based truncation.

PCA here is taken over the *raw* second moment ``K = <mu mu^T>``: samples
are **not** mean-centered.  Most PCA libraries center by default; the two
give different spectra whenever the samples have a nonzero mean (which a
log-permeability field always has).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import _kernels

__all__ = [
    "SampleMatrix",
    "MetricDescriptor",
    "SpectralBasis",
    "Truncation",
    "EUCLIDEAN",
    "pca_fit",
    "project",
    "energy_fraction",
    "select_dimension",
    "subspace_angle",
    "orthonormalize",
    "metric_gram",
    "fix_signs",
]


@dataclass(frozen=True)
class SampleMatrix:
    """Samples stored column-wise: ``data`` is (d, M), ``d = nx * ny``.

    Each column is a grid flattened in row-major (C) order.
    """

    data: np.ndarray
    grid_shape: tuple

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("sample matrix must be (d, M) with d, M >= 1")
        nx, ny = (int(v) for v in self.grid_shape)
        if nx * ny != data.shape[0]:
            raise ValueError(
                f"grid {nx}x{ny} does not match {data.shape[0]} rows")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample matrix contains non-finite entries")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "grid_shape", (nx, ny))

    @property
    def d(self):
        return self.data.shape[0]

    @property
    def count(self):
        return self.data.shape[1]

    def sample(self, s):
        return self.data[:, s].reshape(self.grid_shape)


@dataclass(frozen=True)
class MetricDescriptor:
    """Inner product ``<x, y>_W = x^T (I + eps J J^T) y``.

    ``J is None`` (or ``epsilon == 0``) means the Euclidean product.
    """

    J: np.ndarray = None
    epsilon: float = 0.0

    def __post_init__(self):
        eps = float(self.epsilon)
        if not eps >= 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.J is not None:
            J = np.asarray(self.J, dtype=float).ravel()
            if not np.all(np.isfinite(J)):
                raise ValueError("gradient must be finite")
            if eps > 0.0 and not np.any(J):
                raise ValueError("gradient-weighted metric needs nonzero J")
            object.__setattr__(self, "J", J)
        elif eps > 0.0:
            raise ValueError("epsilon > 0 requires a gradient J")
        object.__setattr__(self, "epsilon", eps)

    @property
    def is_euclidean(self):
        return self.J is None or self.epsilon == 0.0

    @property
    def kind(self):
        return "euclidean" if self.is_euclidean else "gradient"

    def apply(self, x):
        """``W @ x`` for a vector or a (d, k) block."""
        x = np.asarray(x, dtype=float)
        if self.is_euclidean:
            return x
        return x + self.epsilon * np.multiply.outer(self.J, self.J @ x)

    def inner(self, x, y):
        return np.asarray(x).T @ self.apply(y)

    def dense(self, d):
        if self.is_euclidean:
            return np.eye(d)
        return np.eye(d) + self.epsilon * np.outer(self.J, self.J)


EUCLIDEAN = MetricDescriptor()


@dataclass(frozen=True)
class SpectralBasis:
    """Ordered components (columns) with their spectrum and metric.

    ``source_index`` maps each column back to a column of a reference
    Euclidean PCA basis when the basis was derived from one (aGS-PCA keeps
    the reference order, eGS-PCA re-ranks reference columns).
    """

    components: np.ndarray
    singular_values: np.ndarray
    metric: MetricDescriptor = EUCLIDEAN
    source_index: np.ndarray = None

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        sv = np.asarray(self.singular_values, dtype=float).ravel()
        if comps.ndim != 2 or comps.shape[1] != sv.size:
            raise ValueError("components must be (d, m) with m singular values")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "singular_values", sv)
        if self.source_index is not None:
            object.__setattr__(
                self, "source_index", np.asarray(self.source_index, dtype=int))

    @property
    def d(self):
        return self.components.shape[0]

    @property
    def rank(self):
        return self.components.shape[1]

    def head(self, n):
        return self.components[:, :n]

    def truncated(self, n):
        """The first ``n`` components as a basis of its own."""
        src = None if self.source_index is None else self.source_index[:n]
        return SpectralBasis(self.components[:, :n], self.singular_values[:n],
                             self.metric, src)

    def gram(self):
        return metric_gram(self.components, self.metric)


@dataclass(frozen=True)
class Truncation:
    coefficients: np.ndarray
    reconstruction: np.ndarray
    residual: np.ndarray
    N: int


def metric_gram(components, metric):
    """``Phi^T W Phi``."""
    return components.T @ metric.apply(components)


def fix_signs(components):
    """Flip columns so the entry of largest magnitude is positive.

    Ties go to the lowest row index (``argmax`` returns the first hit).
    """
    components = np.array(components, dtype=float, copy=True)
    if components.size == 0:
        return components
    rows = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[rows, np.arange(components.shape[1])])
    signs[signs == 0] = 1.0
    return components * signs


def pca_fit(samples, rank_tol=None):
    """Euclidean PCA of the raw second moment.

    Parameters
    ----------
    samples : SampleMatrix or (d, M) array
    rank_tol : float, optional
        Drop components whose singular value of ``X / sqrt(M)`` falls below
        ``rank_tol * s_1``.  Off by default: all ``min(d, M)`` components
        are returned.

    Returns
    -------
    SpectralBasis
        Columns are eigenvectors of ``K = X X^T / M``; ``singular_values``
        holds the eigenvalues of ``K`` in descending order.
    """
    if isinstance(samples, SampleMatrix):
        X = samples.data
    else:
        X = np.asarray(samples, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.size == 0:
            raise ValueError("empty sample set")
        if not np.all(np.isfinite(X)):
            raise ValueError("samples contain non-finite entries")
    M = X.shape[1]
    U, s, _ = la.svd(X / np.sqrt(M), full_matrices=False, lapack_driver="gesdd")
    if rank_tol is not None and s.size and s[0] > 0:
        keep = s >= rank_tol * s[0]
        U, s = U[:, keep], s[keep]
    return SpectralBasis(fix_signs(U), s**2, EUCLIDEAN)


def project(basis, mu, N):
    """Truncate ``mu`` to the first ``N`` components of ``basis``.

    Coefficients follow ``a_i = phi_i^T W mu`` with the basis's own metric.
    ``mu`` may be a vector of length d or a (d, k) block of vectors.
    """
    N = int(N)
    if not 1 <= N <= basis.rank:
        raise ValueError(f"N={N} outside 1..{basis.rank}")
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] != basis.d:
        raise ValueError(f"vector length {mu.shape[0]} != basis dimension {basis.d}")
    head = basis.components[:, :N]
    coeffs = head.T @ basis.metric.apply(mu)
    recon = head @ coeffs
    return Truncation(coeffs, recon, mu - recon, N)


def energy_fraction(singular_values, n):
    """``omega(n) = sum(s[:n]) / sum(s)``."""
    s = np.asarray(singular_values, dtype=float)
    n = int(n)
    if not 1 <= n <= s.size:
        raise ValueError(f"n={n} outside 1..{s.size}")
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    total = s.sum()
    if total <= 0:
        raise ValueError("all-zero spectrum")
    return float(min(1.0, s[:n].sum() / total))


def select_dimension(singular_values, threshold=0.95):
    """Smallest ``n`` with ``omega(n) >= threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    s = np.asarray(singular_values, dtype=float)
    total = s.sum()
    if total <= 0:
        raise ValueError("all-zero spectrum")
    omega = np.cumsum(s) / total
    # a full spectrum reaches 1.0 up to roundoff
    omega[-1] = 1.0
    return int(np.argmax(omega >= threshold)) + 1


def subspace_angle(basis_a, basis_b, N):
    """Largest principal angle (radians) between the first ``N`` columns."""
    A = basis_a.components if isinstance(basis_a, SpectralBasis) else np.asarray(basis_a)
    B = basis_b.components if isinstance(basis_b, SpectralBasis) else np.asarray(basis_b)
    if A.shape[0] != B.shape[0]:
        raise ValueError("bases live in different dimensions")
    N = int(N)
    if not 1 <= N <= min(A.shape[1], B.shape[1]):
        raise ValueError(f"N={N} exceeds a basis rank")
    return float(np.max(la.subspace_angles(A[:, :N], B[:, :N])))


def orthonormalize(basis, metric=None):
    """Modified Gram-Schmidt of the columns under ``metric``.

    Leading spans are preserved column by column; singular values and
    ``source_index`` are carried over unchanged.
    """
    metric = basis.metric if metric is None else metric
    if metric.is_euclidean:
        J, eps = np.zeros(basis.d), 0.0
    else:
        J, eps = metric.J, metric.epsilon
    q = _kernels.w_gram_schmidt(basis.components, J, eps)
    return SpectralBasis(q, basis.singular_values, metric, basis.source_index)
