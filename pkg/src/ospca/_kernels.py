"""Hot loops with a numba path and a pure-numpy fallback.

The backend is chosen once, at import time.  Set ``OSPCA_DISABLE_NUMBA=1``
to force the numpy implementations (also used automatically when numba is
not importable).  Both implementations of every kernel stay importable
under the ``*_numpy`` / ``*_numba`` names so they can be compared directly.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "tpfa_triplets",
    "perturbation_matrix",
    "w_gram_schmidt",
]


def _numba_requested():
    flag = os.environ.get("OSPCA_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(func):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True)(func)


# ---------------------------------------------------------------------------
# Two-point flux stencil
# ---------------------------------------------------------------------------
def tpfa_triplets_numpy(perm, dx, dy, dz, visc):
    """COO triplets of the five-point TPFA matrix (no well terms).

    ``perm`` is an (nx, ny) array of cell permeabilities in SI units; cell
    ``(i, j)`` has flat index ``i * ny + j``.  Returns ``rows, cols, vals``
    where the last ``nx * ny`` entries are the diagonal.
    """
    nx, ny = perm.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    faces = (
        (idx[:-1, :], idx[1:, :], perm[:-1, :], perm[1:, :], dy * dz / dx),
        (idx[:, :-1], idx[:, 1:], perm[:, :-1], perm[:, 1:], dx * dz / dy),
    )
    heads, tails, trans = [], [], []
    for a, b, ka, kb, geom in faces:
        t = (geom * 2.0 * ka * kb / (ka + kb) / visc).ravel()
        heads.append(a.ravel())
        tails.append(b.ravel())
        trans.append(t)
    a, b, t = np.concatenate(heads), np.concatenate(tails), np.concatenate(trans)
    diag = np.bincount(a, t, nx * ny) + np.bincount(b, t, nx * ny)
    cells = idx.ravel()
    # all faces one way, then the mirrored entries, then the diagonal
    return np.concatenate([a, b, cells]), np.concatenate([b, a, cells]), np.concatenate([-t, -t, diag])


def _tpfa_triplets_loop(perm, dx, dy, dz, visc):
    nx, ny = perm.shape
    nfaces = (nx - 1) * ny + nx * (ny - 1)
    ncell = nx * ny
    rows = np.empty(2 * nfaces + ncell, dtype=np.int64)
    cols = np.empty(2 * nfaces + ncell, dtype=np.int64)
    vals = np.empty(2 * nfaces + ncell)
    diag = np.zeros(ncell)
    gx = dy * dz / dx
    gy = dx * dz / dy
    k = 0
    # x-faces first, then y-faces, matching the numpy ordering
    for i in range(nx - 1):
        for j in range(ny):
            a = i * ny + j
            b = a + ny
            ka = perm[i, j]
            kb = perm[i + 1, j]
            t = gx * 2.0 * ka * kb / (ka + kb) / visc
            rows[k] = a
            cols[k] = b
            vals[k] = -t
            rows[k + nfaces] = b
            cols[k + nfaces] = a
            vals[k + nfaces] = -t
            diag[a] += t
            diag[b] += t
            k += 1
    for i in range(nx):
        for j in range(ny - 1):
            a = i * ny + j
            b = a + 1
            ka = perm[i, j]
            kb = perm[i, j + 1]
            t = gy * 2.0 * ka * kb / (ka + kb) / visc
            rows[k] = a
            cols[k] = b
            vals[k] = -t
            rows[k + nfaces] = b
            cols[k + nfaces] = a
            vals[k + nfaces] = -t
            diag[a] += t
            diag[b] += t
            k += 1
    for c in range(ncell):
        rows[2 * nfaces + c] = c
        cols[2 * nfaces + c] = c
        vals[2 * nfaces + c] = diag[c]
    return rows, cols, vals


tpfa_triplets_numba = _njit(_tpfa_triplets_loop)


# ---------------------------------------------------------------------------
# First-order eigenvector corrections
# ---------------------------------------------------------------------------
def perturbation_matrix_numpy(sigma0, b, eps, gap_tol, coupling_tol):
    """Correction matrix ``alpha[k, n] = eps b_k b_n s_n / (s_k - s_n)``.

    Pairs with ``|s_k - s_n| < gap_tol`` get ``alpha = 0``.  Returns the
    matrix and the number of guarded pairs whose coupling
    ``eps |b_k b_n|`` exceeds ``coupling_tol``.
    """
    coupling = eps * np.outer(b, b)
    gap = sigma0[:, None] - sigma0[None, :]
    guarded = np.abs(gap) < gap_tol
    np.fill_diagonal(guarded, False)
    safe_gap = np.where(guarded, 1.0, gap)
    np.fill_diagonal(safe_gap, 1.0)
    alpha = coupling * sigma0[None, :] / safe_gap
    alpha[guarded] = 0.0
    np.fill_diagonal(alpha, 0.0)
    n_coupled = int(np.count_nonzero(guarded & (np.abs(coupling) > coupling_tol)))
    # each unordered pair is counted once
    return alpha, n_coupled // 2


def _perturbation_matrix_loop(sigma0, b, eps, gap_tol, coupling_tol):
    m = sigma0.shape[0]
    alpha = np.zeros((m, m))
    n_coupled = 0
    for k in range(m):
        for n in range(m):
            if k == n:
                continue
            c = eps * b[k] * b[n]
            gap = sigma0[k] - sigma0[n]
            if abs(gap) < gap_tol:
                if n > k and abs(c) > coupling_tol:
                    n_coupled += 1
                continue
            alpha[k, n] = c * sigma0[n] / gap
    return alpha, n_coupled


perturbation_matrix_numba = _njit(_perturbation_matrix_loop)


# ---------------------------------------------------------------------------
# Modified Gram-Schmidt under W = I + eps J J^T
# ---------------------------------------------------------------------------
def w_gram_schmidt_numpy(vectors, J, eps, passes=2):
    """Orthonormalize columns under ``<x, y> = x.y + eps (J.x)(J.y)``.

    Column order is preserved, so the span of every leading block is kept.
    Two passes of modified Gram-Schmidt ("twice is enough").
    """
    q = np.array(vectors, dtype=float, copy=True)
    m = q.shape[1]
    for j in range(m):
        for _ in range(passes):
            for i in range(j):
                proj = q[:, i] @ q[:, j] + eps * (J @ q[:, i]) * (J @ q[:, j])
                q[:, j] -= proj * q[:, i]
        norm2 = q[:, j] @ q[:, j] + eps * (J @ q[:, j]) ** 2
        if not norm2 > 0.0:
            raise np.linalg.LinAlgError(f"column {j} is linearly dependent")
        q[:, j] /= np.sqrt(norm2)
    return q


def _w_gram_schmidt_loop(vectors, J, eps, passes=2):
    d, m = vectors.shape
    q = vectors.copy()
    jq = np.zeros(m)
    for j in range(m):
        for _ in range(passes):
            jj = 0.0
            for r in range(d):
                jj += J[r] * q[r, j]
            for i in range(j):
                proj = 0.0
                for r in range(d):
                    proj += q[r, i] * q[r, j]
                proj += eps * jq[i] * jj
                for r in range(d):
                    q[r, j] -= proj * q[r, i]
                jj -= proj * jq[i]
        norm2 = 0.0
        jj = 0.0
        for r in range(d):
            norm2 += q[r, j] * q[r, j]
            jj += J[r] * q[r, j]
        norm2 += eps * jj * jj
        if not norm2 > 0.0:
            raise ValueError("linearly dependent column")
        inv = 1.0 / np.sqrt(norm2)
        for r in range(d):
            q[r, j] *= inv
        jq[j] = jj * inv
    return q


_w_gram_schmidt_jit = _njit(_w_gram_schmidt_loop)


def w_gram_schmidt_numba(vectors, J, eps, passes=2):
    try:
        return _w_gram_schmidt_jit(
            np.ascontiguousarray(vectors, dtype=float),
            np.ascontiguousarray(J, dtype=float),
            float(eps),
            passes,
        )
    except ValueError as exc:
        raise np.linalg.LinAlgError(str(exc)) from None


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------
if USE_NUMBA:

    def tpfa_triplets(perm, dx, dy, dz, visc):
        return tpfa_triplets_numba(
            np.ascontiguousarray(perm, dtype=float),
            float(dx), float(dy), float(dz), float(visc),
        )

    def perturbation_matrix(sigma0, b, eps, gap_tol, coupling_tol):
        return perturbation_matrix_numba(
            np.ascontiguousarray(sigma0, dtype=float),
            np.ascontiguousarray(b, dtype=float),
            float(eps), float(gap_tol), float(coupling_tol),
        )

    w_gram_schmidt = w_gram_schmidt_numba
else:
    tpfa_triplets = tpfa_triplets_numpy
    perturbation_matrix = perturbation_matrix_numpy
    w_gram_schmidt = w_gram_schmidt_numpy
