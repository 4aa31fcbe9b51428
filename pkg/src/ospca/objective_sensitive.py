"""Gradient-sensitive PCA: exact (GS), first-order (aGS) and extension (eGS).

All three target the metric ``W = I + eps J^T J`` where ``J`` is the
objective gradient at a trial point.  With a single gradient ``W`` is a
rank-one update of the identity, so its square root has a closed form and
the exact algorithm needs only the one SVD of the transformed samples.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .decomposition import (
    EUCLIDEAN,
    MetricDescriptor,
    SampleMatrix,
    SpectralBasis,
    fix_signs,
    orthonormalize,
    pca_fit,
)

__all__ = [
    "DegeneracyWarning",
    "GradientProbe",
    "MetricSqrt",
    "PerturbationCorrection",
    "make_probe",
    "metric_sqrt",
    "gspca_fit",
    "agspca_fit",
    "perturbed_eigen_residual",
    "egspca_select",
    "egspca_extend",
]

# |s_k - s_n| below this fraction of s_1 counts as degenerate
GAP_TOL = 1e-8
# eps |b_k b_n| above this is a coupling worth warning about
COUPLING_TOL = 1e-12


class DegeneracyWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GradientProbe:
    """Gradient ``J`` at trial point ``eta`` with its reference coefficients.

    ``b[i] = phi_i^T J`` against the reference Euclidean PCA basis.
    """

    eta: np.ndarray
    J: np.ndarray
    epsilon: float
    b: np.ndarray

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        for name in ("eta", "J", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def eps_scaled(self):
        """Dimensionless sensitivity ``eps * |J|^2``."""
        return float(self.epsilon * (self.J @ self.J))

    def with_scaled_epsilon(self, eps_scaled):
        """Same probe with ``eps`` chosen so that ``eps |J|^2 = eps_scaled``."""
        if eps_scaled < 0:
            raise ValueError("eps_scaled must be nonnegative")
        norm2 = float(self.J @ self.J)
        if eps_scaled > 0 and norm2 == 0:
            raise ValueError("cannot scale epsilon for a zero gradient")
        return replace(self, epsilon=eps_scaled / norm2 if eps_scaled else 0.0)

    @property
    def metric(self):
        if self.epsilon == 0:
            return EUCLIDEAN
        return MetricDescriptor(self.J, self.epsilon)


def make_probe(base, J, eta=None, epsilon=0.0, eps_scaled=None):
    J = np.asarray(J, dtype=float).ravel()
    if J.size != base.d:
        raise ValueError("gradient length does not match the basis")
    eta = np.zeros_like(J) if eta is None else np.asarray(eta, dtype=float)
    probe = GradientProbe(eta, J, float(epsilon), base.components.T @ J)
    if eps_scaled is not None:
        probe = probe.with_scaled_epsilon(eps_scaled)
    return probe


@dataclass(frozen=True)
class MetricSqrt:
    """Symmetric square root of ``W`` and its inverse in rank-one form.

    ``A x = x + c (u.x) u`` with ``u = J/|J|`` and ``c = sqrt(1 + eps|J|^2) - 1``;
    the inverse uses ``c' = 1/sqrt(1 + eps|J|^2) - 1``.
    """

    J_unit: np.ndarray
    scale_forward: float
    scale_inverse: float

    def _rank_one(self, x, c):
        x = np.asarray(x, dtype=float)
        if c == 0.0:
            return x.copy()
        return x + c * np.multiply.outer(self.J_unit, self.J_unit @ x)

    def apply(self, x):
        return self._rank_one(x, self.scale_forward)

    def apply_inverse(self, x):
        return self._rank_one(x, self.scale_inverse)

    def dense(self):
        return self.apply(np.eye(self.J_unit.size))


def metric_sqrt(J, epsilon):
    J = np.asarray(J, dtype=float).ravel()
    if not epsilon >= 0:
        raise ValueError("epsilon must be nonnegative")
    if not np.all(np.isfinite(J)):
        raise ValueError("gradient must be finite")
    norm = float(np.linalg.norm(J))
    if epsilon == 0:
        unit = J / norm if norm > 0 else np.zeros_like(J)
        return MetricSqrt(unit, 0.0, 0.0)
    if norm == 0:
        raise ValueError("zero gradient with epsilon > 0")
    t = np.sqrt(1.0 + epsilon * norm**2)
    return MetricSqrt(J / norm, t - 1.0, 1.0 / t - 1.0)


def _dense_factor(J, epsilon):
    """Non-symmetric factor ``Sigma_W Phi_W^T`` from a dense eigensolve."""
    d = J.size
    W = np.eye(d) + epsilon * np.outer(J, J)
    lam, vec = np.linalg.eigh(W)
    forward = np.sqrt(lam)[:, None] * vec.T
    inverse = vec / np.sqrt(lam)[None, :]
    return forward, inverse


def gspca_fit(samples, J, epsilon, route="rank_one"):
    """Exact GS-PCA through the transformed-sample route.

    Samples are mapped by a factor ``A`` with ``A^T A = W``, ordinary PCA
    runs in that space, and the components are mapped back by ``A^{-1}``.
    The result is W-orthonormal and carries the transformed-space spectrum.

    ``route="dense"`` builds ``A = Sigma_W Phi_W^T`` from a dense
    eigendecomposition of ``W`` instead of the closed rank-one root.  It is
    O(d^3) and only meant as a cross-check.
    """
    X = samples.data if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=float)
    J = np.asarray(J, dtype=float).ravel()
    if J.size != X.shape[0]:
        raise ValueError("gradient length does not match sample dimension")
    if epsilon == 0:
        metric_sqrt(J, 0.0)
        return pca_fit(X)
    if route == "rank_one":
        root = metric_sqrt(J, epsilon)
        forward, inverse = root.apply, root.apply_inverse
    elif route == "dense":
        if not np.any(J):
            raise ValueError("zero gradient with epsilon > 0")
        fwd, inv = _dense_factor(J, epsilon)
        forward, inverse = (lambda x: fwd @ x), (lambda x: inv @ x)
    else:
        raise ValueError(f"unknown route {route!r}")
    hat = pca_fit(forward(X))
    comps = fix_signs(inverse(hat.components))
    return SpectralBasis(comps, hat.singular_values, MetricDescriptor(J, epsilon))


@dataclass(frozen=True)
class PerturbationCorrection:
    alpha: np.ndarray
    sigma1: np.ndarray
    guarded_pairs: int = 0


def agspca_fit(base, probe, resort=False, orthonormal=False, gap_tol=GAP_TOL):
    """First-order (stationary perturbation) approximation of GS-PCA.

    Parameters
    ----------
    base : SpectralBasis
        Euclidean PCA basis, spectrum descending.
    probe : GradientProbe
        ``probe.b`` must be the coefficients of ``J`` against ``base``.
    resort : bool
        Reorder components by the corrected spectrum.  Off by default so a
        component keeps its place when its gradient coefficient vanishes.
    orthonormal : bool
        Apply modified Gram-Schmidt under W to the result.  The raw
        first-order vectors are W-orthonormal only up to O(eps).
    gap_tol : float
        Relative gap below which a pair is treated as degenerate and left
        uncoupled (``alpha = 0``).

    Returns
    -------
    (SpectralBasis, PerturbationCorrection)
    """
    if not base.metric.is_euclidean:
        raise ValueError("aGS-PCA perturbs a Euclidean PCA basis")
    sigma0 = base.singular_values
    b = probe.b
    if b.size != base.rank:
        raise ValueError("probe coefficients do not match the base basis")
    eps = probe.epsilon
    alpha, n_guarded = _kernels.perturbation_matrix(
        sigma0, b, eps, gap_tol * sigma0[0], COUPLING_TOL)
    if n_guarded:
        warnings.warn(
            f"{n_guarded} near-degenerate component pair(s) coupled by the "
            "gradient were left uncorrected", DegeneracyWarning, stacklevel=2)
    sigma1 = eps * b**2 * sigma0
    comps = base.components + base.components @ alpha.T
    sigma = sigma0 + sigma1
    order = np.arange(base.rank)
    if resort:
        order = np.argsort(-sigma, kind="stable")
        comps, sigma = comps[:, order], sigma[order]
    basis = SpectralBasis(comps, sigma, probe.metric, order)
    if orthonormal:
        basis = orthonormalize(basis)
    return basis, PerturbationCorrection(alpha, sigma1, n_guarded)


def perturbed_eigen_residual(base, probe, corrected):
    """Per-component norm of ``K p_k + eps b_k sum_i b_i K p_i - s_k p_k``.

    ``K`` is rebuilt from ``base``; ``b`` follows each corrected component
    through ``corrected.source_index``.
    """
    if corrected.d != base.d:
        raise ValueError("dimension mismatch")
    src = corrected.source_index
    if src is None:
        if corrected.rank != base.rank:
            raise ValueError("corrected basis needs a source_index")
        src = np.arange(corrected.rank)
    b = probe.b[src]
    P = corrected.components
    KP = base.components @ (base.singular_values[:, None] * (base.components.T @ P))
    defect = KP + probe.epsilon * np.outer(KP @ b, b) - P * corrected.singular_values
    return np.linalg.norm(defect, axis=0)


def egspca_select(probe, N, count):
    """Indices ``i >= N`` (0-based) with the largest ``b_i^2``, best first.

    Ties go to the lower index.  If every tail coefficient is zero the
    selection falls back to spectrum order and a warning is issued.
    """
    b = np.asarray(probe.b if isinstance(probe, GradientProbe) else probe, dtype=float)
    N, count = int(N), int(count)
    if count < 1:
        raise ValueError("count must be at least 1")
    if N < 0 or N + count > b.size:
        raise ValueError(f"cannot pick {count} components after N={N} from {b.size}")
    tail = np.arange(N, b.size)
    b2 = b[tail] ** 2
    if not np.any(b2):
        warnings.warn("gradient has no tail coefficients; extending in spectrum order",
                      DegeneracyWarning, stacklevel=2)
    order = np.lexsort((tail, -b2))
    return [int(i) for i in tail[order[:count]]]


def egspca_extend(base, probe, N, count):
    """First ``N`` components of ``base`` followed by the selected tail.

    The remaining components follow in their original order, so the result
    is a re-ranking of ``base`` and stays Euclidean-orthonormal.
    """
    N, count = int(N), int(count)
    if not 0 <= N <= base.rank:
        raise ValueError(f"N={N} outside 0..{base.rank}")
    picked = egspca_select(probe, N, count) if count else []
    taken = set(picked)
    rest = [i for i in range(N, base.rank) if i not in taken]
    order = np.array(list(range(N)) + picked + rest, dtype=int)
    src = order if base.source_index is None else base.source_index[order]
    return SpectralBasis(base.components[:, order], base.singular_values[order],
                         EUCLIDEAN, src)
