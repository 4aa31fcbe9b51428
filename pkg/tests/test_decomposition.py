"""Second-moment PCA, projections and the energy criterion.

Oracles: a dense ``eigh`` of the explicitly formed second moment, and small
hand-worked cases.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ospca.decomposition import (
    EUCLIDEAN,
    MetricDescriptor,
    SampleMatrix,
    SpectralBasis,
    energy_fraction,
    fix_signs,
    orthonormalize,
    pca_fit,
    project,
    select_dimension,
    subspace_angle,
)

from conftest import dense_second_moment


class TestSampleMatrix:
    def test_shape_bookkeeping(self):
        s = SampleMatrix(np.arange(12.0).reshape(6, 2), (2, 3))
        assert (s.d, s.count) == (6, 2)
        np.testing.assert_array_equal(s.sample(1), [[1, 3, 5], [7, 9, 11]])

    @pytest.mark.parametrize("data, shape", [
        (np.zeros((4, 0)), (2, 2)),
        (np.array([[1.0], [np.nan], [0.0], [0.0]]), (2, 2)),
        (np.ones((4, 3)), (3, 2)),
    ])
    def test_rejects_bad_input(self, data, shape):
        with pytest.raises(ValueError):
            SampleMatrix(data, shape)


class TestMetricDescriptor:
    def test_apply_matches_dense(self, rng):
        J = rng.normal(size=7)
        m = MetricDescriptor(J, 0.3)
        x = rng.normal(size=(7, 4))
        np.testing.assert_allclose(m.apply(x), m.dense(7) @ x, atol=1e-14)
        assert m.kind == "gradient"

    def test_euclidean(self):
        assert EUCLIDEAN.is_euclidean and EUCLIDEAN.kind == "euclidean"
        assert MetricDescriptor(np.ones(3), 0.0).is_euclidean

    @pytest.mark.parametrize("J, eps", [(np.ones(3), -1.0), (np.zeros(3), 1.0),
                                        (np.array([1.0, np.inf, 0.0]), 1.0)])
    def test_invalid(self, J, eps):
        with pytest.raises(ValueError):
            MetricDescriptor(J, eps)


class TestPcaFit:
    def test_axis_aligned(self):
        basis = pca_fit(np.array([[1.0, -1.0], [0.0, 0.0]]))
        np.testing.assert_allclose(basis.singular_values, [1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(basis.components[:, 0], [1.0, 0.0])
        assert basis.rank == 2

    def test_rank_one_diagonal(self):
        basis = pca_fit(np.array([[1.0, -1.0], [1.0, -1.0]]))
        assert basis.singular_values[0] == pytest.approx(2.0)
        np.testing.assert_allclose(basis.components[:, 0], [2**-0.5, 2**-0.5])

    def test_no_centering(self):
        # a constant offset is the dominant raw-moment direction
        X = np.ones((3, 5)) * 2.0
        basis = pca_fit(X)
        assert basis.singular_values[0] == pytest.approx(12.0)
        np.testing.assert_allclose(basis.components[:, 0], np.ones(3) / np.sqrt(3))

    def test_matches_dense_eigh(self, rng):
        X = rng.normal(size=(12, 30))
        basis = pca_fit(X)
        K, lam, vec = dense_second_moment(X)
        np.testing.assert_allclose(basis.singular_values, lam, rtol=1e-12, atol=1e-14)
        # columns agree up to sign with the oracle eigenvectors
        dots = np.abs(np.sum(basis.components * vec, axis=0))
        np.testing.assert_allclose(dots, 1.0, atol=1e-10)

    def test_rank_is_min_d_m(self, rng):
        assert pca_fit(rng.normal(size=(10, 4))).rank == 4
        assert pca_fit(rng.normal(size=(4, 10))).rank == 4

    def test_rank_tol_is_opt_in(self, rng):
        X = np.outer(rng.normal(size=6), rng.normal(size=9))
        assert pca_fit(X).rank == 6
        assert pca_fit(X, rank_tol=1e-10).rank == 1

    def test_sign_convention(self, rng):
        basis = pca_fit(rng.normal(size=(8, 20)))
        C = basis.components
        rows = np.argmax(np.abs(C), axis=0)
        assert np.all(C[rows, np.arange(C.shape[1])] > 0)

    def test_bit_identical_refit(self, train):
        a, b = pca_fit(train), pca_fit(train)
        assert np.array_equal(a.components, b.components)
        assert np.array_equal(a.singular_values, b.singular_values)

    @pytest.mark.parametrize("bad", [np.zeros((3, 0)), np.array([[1.0, np.nan]])])
    def test_errors(self, bad):
        with pytest.raises(ValueError):
            pca_fit(bad)

    def test_train_trace_and_orthonormality(self, study, train):
        basis = study.base
        X = train.data
        trace = np.mean(np.sum(X**2, axis=0))
        assert basis.singular_values.sum() == pytest.approx(trace, rel=1e-10)
        gram = basis.gram()
        assert np.max(np.abs(gram - np.eye(basis.rank))) < 1e-8
        assert np.all(np.diff(basis.singular_values) <= 0)

    def test_train_spectrum_vs_dense_oracle(self, study, train):
        _, lam, _ = dense_second_moment(train.data)
        s = study.base.singular_values
        # eigh on K has absolute accuracy ~ eps * s_1
        np.testing.assert_allclose(s, np.clip(lam, 0, None), atol=1e-11 * s[0])


def test_fix_signs_tie_goes_to_lowest_index():
    C = np.array([[-1.0, 0.5], [1.0, -0.5]])
    out = fix_signs(C)
    np.testing.assert_array_equal(out[:, 0], [1.0, -1.0])
    np.testing.assert_array_equal(out[:, 1], [0.5, -0.5])


class TestProject:
    def test_w_inner_product_by_hand(self):
        metric = MetricDescriptor(np.array([1.0, 0.0]), 3.0)  # W = diag(4, 1)
        basis = SpectralBasis(np.array([[0.5], [0.0]]), [1.0], metric)
        t = project(basis, np.array([1.0, 0.0]), 1)
        np.testing.assert_allclose(t.coefficients, [2.0])
        np.testing.assert_allclose(t.reconstruction, [1.0, 0.0])
        np.testing.assert_allclose(t.residual, [0.0, 0.0])

    def test_complete_basis(self, rng):
        basis = pca_fit(rng.normal(size=(6, 10)))
        mu = rng.normal(size=6)
        t = project(basis, mu, 6)
        assert np.linalg.norm(t.residual) < 1e-10 * np.linalg.norm(mu)

    def test_block_equals_columnwise(self, rng):
        basis = pca_fit(rng.normal(size=(6, 10)))
        X = rng.normal(size=(6, 3))
        block = project(basis, X, 2)
        for k in range(3):
            np.testing.assert_allclose(block.residual[:, k], project(basis, X[:, k], 2).residual)

    @pytest.mark.parametrize("N", [0, 7])
    def test_N_out_of_range(self, rng, N):
        basis = pca_fit(rng.normal(size=(6, 10)))
        with pytest.raises(ValueError):
            project(basis, np.zeros(6), N)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            project(pca_fit(rng.normal(size=(6, 10))), np.zeros(5), 1)

    def test_tail_identity_moderate_N(self, study, train):
        s = study.base.singular_values
        res = [np.mean(np.sum(project(study.base, train.data, N).residual ** 2, axis=0))
               for N in (1, 6, 9, 50, 200)]
        tails = [s[N:].sum() for N in (1, 6, 9, 50, 200)]
        np.testing.assert_allclose(res, tails, rtol=1e-8)
        assert all(a >= b for a, b in zip(res, res[1:]))


class TestEnergy:
    @pytest.mark.parametrize("s, n, expected", [((3, 1, 1), 1, 0.6), ((3, 1, 1), 3, 1.0),
                                                ((19, 1), 1, 0.95)])
    def test_fraction(self, s, n, expected):
        assert energy_fraction(s, n) == pytest.approx(expected)

    @pytest.mark.parametrize("s, thr, expected", [((19, 1), 0.95, 1), ((1, 1, 1, 1), 0.95, 4),
                                                  ((1, 1, 1, 1), 1.0, 4)])
    def test_select(self, s, thr, expected):
        assert select_dimension(s, thr) == expected

    def test_errors(self):
        with pytest.raises(ValueError):
            energy_fraction((0.0, 0.0), 1)
        with pytest.raises(ValueError):
            select_dimension((0.0, 0.0), 0.9)
        with pytest.raises(ValueError):
            select_dimension((1.0,), 0.0)

    def test_train_N_in_range(self, study):
        assert 5 <= study.N <= 15

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1e3)),
           st.floats(0.01, 1.0))
    def test_select_is_smallest(self, s, thr):
        if s.sum() <= 0:
            return
        n = select_dimension(s, thr)
        omega = np.cumsum(s) / s.sum()
        omega[-1] = 1.0
        assert omega[n - 1] >= thr
        assert n == 1 or omega[n - 2] < thr


class TestSubspaceAngle:
    def test_identical(self, rng):
        b = pca_fit(rng.normal(size=(5, 8)))
        assert subspace_angle(b, b, 3) < 1e-12

    def test_orthogonal_axes(self):
        assert subspace_angle(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]), 1) == pytest.approx(np.pi / 2)

    def test_errors(self):
        with pytest.raises(ValueError):
            subspace_angle(np.eye(3), np.eye(4), 1)
        with pytest.raises(ValueError):
            subspace_angle(np.eye(3), np.eye(3)[:, :1], 2)


def test_orthonormalize_under_w(rng):
    J = rng.normal(size=9)
    metric = MetricDescriptor(J, 2.0)
    raw = SpectralBasis(rng.normal(size=(9, 4)), np.arange(4.0)[::-1], metric)
    q = orthonormalize(raw)
    assert np.max(np.abs(q.gram() - np.eye(4))) < 1e-12
    # leading spans are kept
    for k in range(1, 5):
        assert subspace_angle(q, raw, k) < 1e-10
