"""Study pipeline, score reports and the subspace descent."""

import numpy as np
import pytest

from ospca.config import load_config
from ospca.decomposition import SpectralBasis, project
from ospca.experiments import (
    DivergenceError,
    ScoreReport,
    ScoreRow,
    StageError,
    Study,
    run_test_experiment,
    run_train_experiment,
    score_train,
    subspace_descent,
)
from ospca.reservoir import QuadraticObjective


@pytest.fixture(scope="module")
def train_report(study, default_config):
    return run_train_experiment(default_config, study)


@pytest.fixture(scope="module")
def test_report(study, default_config):
    return run_test_experiment(default_config, study)


class TestPipeline:
    def test_truth_and_trial(self, study):
        N = study.N
        assert np.allclose(project(study.base, study.mu_star, 2 * N).residual, 0, atol=1e-10)
        r = study.mu_star - study.eta
        assert np.max(np.abs(study.base.components[:, :N].T @ r)) < 1e-10
        assert study.case.S0 is not None
        assert study.objective_at_eta > 0

    def test_grid_mismatch(self):
        s = Study(load_config(overrides=["test.n=15"]))
        with pytest.raises(StageError) as err:
            s.test_field
        assert err.value.stage == "test-data" and err.value.is_validation

    def test_layout(self, study):
        assert study.layout() == [("PCA", 6), ("GS-PCA", 6), ("aGS-PCA", 6), ("PCA", 9),
                                  ("GS-PCA", 9), ("aGS-PCA", 9), ("eGS-PCA", 9)]


class TestTrainReport:
    def test_rows(self, train_report):
        assert len(train_report.rows) == 7
        assert [r.algorithm for r in train_report.rows] == [
            "PCA", "GS-PCA", "aGS-PCA", "PCA", "GS-PCA", "aGS-PCA", "eGS-PCA"]
        assert all(r.objective_kind == "linearized" for r in train_report.rows)

    def test_recomputation(self, train_report, study, train):
        """Residuals re-derived from explicit projectors agree with the report."""
        J = study.probe("central").J
        for row in train_report.rows:
            basis = study.basis(row.algorithm, "central")
            P = basis.components[:, :row.N1]
            R = train.data - P @ (P.T @ basis.metric.apply(train.data))
            assert row.field_residual == pytest.approx(np.mean(np.sum(R**2, 0)), rel=1e-10)
            assert row.objective_residual == pytest.approx(np.mean((J @ R) ** 2), rel=1e-10)

    def test_pca_omega(self, train_report, study):
        s = study.base.singular_values
        assert train_report.row("PCA", 9).omega == pytest.approx(s[:9].sum() / s.sum())

    def test_gs_orderings(self, train_report, study):
        for n1 in study.n1_values:
            pca, gs = train_report.row("PCA", n1), train_report.row("GS-PCA", n1)
            assert gs.objective_residual <= 1e-2 * pca.objective_residual
            assert gs.field_residual <= 1.25 * pca.field_residual
            assert gs.omega >= pca.omega

    def test_zero_eps_rows_equal_pca(self):
        cfg = load_config(overrides=["gs.eps_scaled=0"])
        rep = run_train_experiment(cfg)
        for n1 in (6, 9):
            pca = rep.row("PCA", n1)
            for alg in ("GS-PCA", "aGS-PCA"):
                row = rep.row(alg, n1)
                for a, b in ((row.omega, pca.omega), (row.field_residual, pca.field_residual),
                             (row.objective_residual, pca.objective_residual)):
                    assert abs(a - b) <= 1e-8 * max(abs(b), 1e-300)

    def test_csv(self, train_report):
        lines = train_report.to_csv().splitlines()
        assert lines[0].startswith("algorithm,N1,omega")
        assert len(lines) == 8


class TestTestReport:
    def test_structure(self, test_report):
        assert len(test_report.rows) == 14
        assert {r.gradient for r in test_report.rows} == {"central", "directional"}
        assert all(r.objective_kind == "simulated" for r in test_report.rows)
        assert -1 <= test_report.meta["gradient_cosine"] <= 1

    def test_pca_rows_ignore_gradient(self, test_report):
        for n1 in (6, 9):
            a = test_report.row("PCA", n1, "central")
            b = test_report.row("PCA", n1, "directional")
            assert (a.field_residual, a.objective_residual) == (b.field_residual, b.objective_residual)

    def test_ags_directional_unperturbed(self, test_report, study):
        pca = test_report.row("PCA", study.N, "directional")
        ags = test_report.row("aGS-PCA", study.N, "directional")
        assert ags.field_residual == pytest.approx(pca.field_residual, rel=1e-8)
        assert ags.objective_residual == pytest.approx(pca.objective_residual, rel=1e-8)

    def test_rasters(self, test_report):
        assert "truth" in test_report.fields and "trial" in test_report.fields
        assert all(g.shape == (21, 21) for g in test_report.fields.values())


def test_report_rejects_negative():
    with pytest.raises(ArithmeticError):
        ScoreReport("train", 1, [ScoreRow("PCA", 1, 0.5, -1.0, 0.0)])


def test_score_train_spectrum_override(rng):
    basis = SpectralBasis(np.eye(3), [3.0, 1.0, 1.0])
    X = rng.normal(size=(3, 5))
    omega, _, _ = score_train(basis, X, np.ones(3), 1)
    assert omega == pytest.approx(0.6)
    omega, _, _ = score_train(basis, X, np.ones(3), 1, spectrum=[1.0, 1.0, 2.0])
    assert omega == pytest.approx(0.25)


class TestDescent:
    def line(self, rng, d=12):
        phi = rng.normal(size=d)
        phi /= np.linalg.norm(phi)
        target = 3.7 * phi
        return SpectralBasis(phi[:, None], [1.0]), QuadraticObjective(target)

    def test_converges_on_line(self, rng):
        basis, f = self.line(rng)
        a, value = subspace_descent(f, basis, 1, [0.0], 200, 0.25)
        assert a[0] == pytest.approx(3.7, abs=1e-6)
        assert value < 1e-10

    def test_start_at_optimum(self, rng):
        basis, f = self.line(rng)
        a, _ = subspace_descent(f, basis, 1, [3.7], 20, 0.25)
        assert abs(a[0] - 3.7) < 1e-9

    def test_gs_subspace_not_worse_on_surrogate(self, rng):
        # objective minimiser lies in the GS-preferred direction
        d = 8
        pca = SpectralBasis(np.eye(d), np.arange(d, 0, -1.0))
        target = np.zeros(d)
        target[5] = 2.0
        gs = SpectralBasis(np.eye(d)[:, [5, 0, 1, 2, 3, 4, 6, 7]], np.arange(d, 0, -1.0))
        f = QuadraticObjective(target)
        _, v_pca = subspace_descent(f, pca, 2, np.zeros(2), 100, 0.25)
        _, v_gs = subspace_descent(f, gs, 2, np.zeros(2), 100, 0.25)
        assert v_gs <= v_pca

    def test_divergence(self, rng):
        basis, f = self.line(rng)
        with pytest.raises(DivergenceError) as err:
            subspace_descent(f, basis, 1, [0.0], 50, 1.5)
        assert len(err.value.history) == 6

    @pytest.mark.parametrize("kw", [dict(N=2), dict(lr=0.0), dict(a0=[0.0, 1.0]),
                                    dict(fd_step=0.0)])
    def test_errors(self, rng, kw):
        basis, f = self.line(rng)
        args = dict(N=1, a0=[0.0], steps=3, lr=0.1, fd_step=1e-3)
        args.update(kw)
        with pytest.raises(ValueError):
            subspace_descent(f, basis, args["N"], args["a0"], args["steps"], args["lr"],
                             args["fd_step"])

    def test_normalize_on_darcy(self, study):
        basis = study.base
        a0 = basis.components[:, :study.N].T @ study.eta
        start = study.objective_at_eta
        _, value = subspace_descent(study.case, basis, study.N, a0, 5, 0.5, 1e-3, normalize=True)
        assert value <= start
