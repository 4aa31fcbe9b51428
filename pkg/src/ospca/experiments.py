"""Train-score and test-score studies, plus a small subspace descent.

The pipeline behind both studies:

1. draw the train set and fit Euclidean PCA;
2. pick ``N`` by the energy criterion;
3. draw one test field and truncate it to ``2N`` components; that
   truncation ``mu*`` is the ground truth and its rates are the
   observations, so ``C(mu*) = 0``;
4. the trial point ``eta`` is the truncation of ``mu*`` to ``N``;
5. gradients at ``eta``: central differences over the ``2N`` leading
   components ("central") and the two-point direction toward ``mu*``
   ("directional").

Train scores use the linearised objective residual ``(J . mu_Nr)^2``
averaged over the train set.  Test scores simulate the truncated test
field.  aGS-PCA vectors are W-orthonormalised (Gram-Schmidt on the leading
``max(N1)`` columns, which keeps every leading span) before they are scored;
the raw first-order vectors are far from orthonormal when ``eps |J|^2`` is
large.
"""

import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .decomposition import (
    energy_fraction,
    orthonormalize,
    pca_fit,
    project,
    select_dimension,
)
from .formats import read_case, read_dataset_csv
from .objective_sensitive import agspca_fit, egspca_extend, gspca_fit
from .randfield import generate_field, make_dataset
from .reservoir import (
    Grid2D,
    ReservoirCase,
    SimulationError,
    as_objective,
    direction_gradient,
    fd_gradient_central,
    five_spot_wells,
    gradient_cosine,
    objective,
    simulate,
)

__all__ = [
    "ALGORITHMS",
    "GRADIENT_KINDS",
    "StageError",
    "DivergenceError",
    "ScoreRow",
    "ScoreReport",
    "Study",
    "score_train",
    "run_train_experiment",
    "run_test_experiment",
    "subspace_descent",
]

ALGORITHMS = ("PCA", "GS-PCA", "aGS-PCA", "eGS-PCA")
GRADIENT_KINDS = ("central", "directional")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def is_validation(self):
        """True when the failure is bad input rather than a numerical breakdown."""
        numeric = (np.linalg.LinAlgError, SimulationError, ArithmeticError)
        return isinstance(self.cause, (ValueError, OSError, KeyError)) and not isinstance(
            self.cause, numeric)


class DivergenceError(ArithmeticError):
    """Descent aborted; ``history`` holds the objective after each step."""

    def __init__(self, message, coefficients, history):
        super().__init__(message)
        self.coefficients = coefficients
        self.history = list(history)


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(frozen=True)
class ScoreRow:
    algorithm: str
    N1: int
    omega: float
    field_residual: float
    objective_residual: float
    gradient: str = "central"
    objective_kind: str = "linearized"

    def as_dict(self):
        return {
            "algorithm": self.algorithm,
            "N1": self.N1,
            "omega": self.omega,
            "field_residual": self.field_residual,
            "objective_residual": self.objective_residual,
            "gradient": self.gradient,
            "objective_kind": self.objective_kind,
        }


@dataclass
class ScoreReport:
    """Rows of one study plus scalar metadata.

    Train rows carry ``<|mu_Nr|^2>`` and ``<(J mu_Nr)^2>``; test rows carry
    ``|mu*_Nr|`` and the simulated ``C(mu*_Nt)``.  ``fields`` holds 2D grids
    (ground truth, trial point, projections) for raster output and is not
    part of :meth:`as_dict`.
    """

    kind: str
    N: int
    rows: list
    meta: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for row in self.rows:
            vals = (row.omega, row.field_residual, row.objective_residual)
            if not all(np.isfinite(v) and v >= 0 for v in vals):
                raise ArithmeticError(f"non-finite or negative score in {row}")

    def row(self, algorithm, N1, gradient=None):
        for r in self.rows:
            if r.algorithm == algorithm and r.N1 == N1 and (gradient is None or r.gradient == gradient):
                return r
        raise KeyError((algorithm, N1, gradient))

    def as_dict(self):
        return {"kind": self.kind, "N": self.N, "meta": dict(self.meta),
                "rows": [r.as_dict() for r in self.rows]}

    def to_csv(self):
        if self.kind == "train":
            head = "algorithm,N1,omega,mean_sq_field_residual,mean_sq_objective_residual,objective_kind"
            body = [f"{r.algorithm},{r.N1},{r.omega:.17g},{r.field_residual:.17g},"
                    f"{r.objective_residual:.17g},{r.objective_kind}" for r in self.rows]
        else:
            head = "algorithm,N1,gradient,omega,field_residual_norm,objective,objective_kind"
            body = [f"{r.algorithm},{r.N1},{r.gradient},{r.omega:.17g},{r.field_residual:.17g},"
                    f"{r.objective_residual:.17g},{r.objective_kind}" for r in self.rows]
        return "\n".join([head] + body) + "\n"


def _case_from_config(cfg):
    if cfg["case.file"]:
        return read_case(cfg["case.file"])
    n = cfg["train.n"]
    grid = Grid2D(n, n, cfg["case.dx"], cfg["case.dy"], cfg["case.dz"])
    wells = five_spot_wells(grid, cfg["case.injector_bhp"], cfg["case.producer_bhp"],
                            cfg["case.rw"])
    return ReservoirCase(grid, wells, cfg["case.viscosity"])


class Study:
    """Lazily evaluated pipeline state for one configuration.

    Every attribute is computed once on first access, so the train and test
    studies (and the CLI subcommands) share work.
    """

    def __init__(self, config):
        self.config = config

    # -- data ------------------------------------------------------------
    @cached_property
    def train(self):
        cfg = self.config
        with _stage("train-data"):
            if cfg["data.train"]:
                return read_dataset_csv(cfg["data.train"])
            return make_dataset(cfg["train.count"], cfg.train_params, cfg["field.kmin"],
                                cfg["field.kmax"], workers=cfg["gradient.workers"])

    @cached_property
    def test_field(self):
        cfg = self.config
        with _stage("test-data"):
            if cfg["data.test"]:
                mu = read_dataset_csv(cfg["data.test"]).data[:, 0].copy()
            else:
                mu = generate_field(cfg.test_params, 0, cfg["field.kmin"], cfg["field.kmax"]).mu.ravel()
            if mu.size != self.train.d:
                raise ValueError(f"test field has {mu.size} cells, train fields have {self.train.d}")
            return mu

    # -- reference basis ------------------------------------------------
    @cached_property
    def base(self):
        with _stage("pca"):
            return pca_fit(self.train)

    @cached_property
    def N(self):
        with _stage("dimension"):
            N = select_dimension(self.base.singular_values, self.config.threshold)
            if 2 * N > self.base.rank:
                raise ValueError(f"2N={2 * N} exceeds the basis rank {self.base.rank}")
            return N

    @cached_property
    def n1_values(self):
        vals = self.config.n1_values(self.N)
        if max(vals) > self.base.rank:
            raise StageError("dimension", ValueError("N1 exceeds the basis rank"))
        return vals

    @cached_property
    def mu_star(self):
        return project(self.base, self.test_field, 2 * self.N).reconstruction

    @cached_property
    def eta(self):
        return project(self.base, self.mu_star, self.N).reconstruction

    @cached_property
    def case(self):
        with _stage("case"):
            case = _case_from_config(self.config)
            if case.grid.size != self.train.d:
                raise ValueError(f"case grid has {case.grid.size} cells, fields have {self.train.d}")
            return replace(case, S0=simulate(case, self.mu_star, check=True))

    @cached_property
    def objective_at_eta(self):
        with _stage("simulate"):
            return objective(self.case, self.eta)

    # -- gradients --------------------------------------------------------
    def probe(self, kind="central"):
        """Gradient probe of the given kind with ``eps |J|^2 = gs.eps_scaled``."""
        return self._probes[kind].with_scaled_epsilon(self.config.eps_scaled)

    @cached_property
    def _probes(self):
        return _LazyProbes(self)

    def _make_probe(self, kind):
        cfg = self.config
        with _stage(f"gradient-{kind}"):
            if kind == "central":
                return fd_gradient_central(self.case, self.base, self.eta, 2 * self.N,
                                           cfg["gradient.fd_step"], cfg["gradient.fd_policy"],
                                           workers=cfg["gradient.workers"])
            if kind == "directional":
                return direction_gradient(self.eta, self.mu_star, self.objective_at_eta,
                                          self.base, self.N)
            raise ValueError(f"unknown gradient kind {kind!r}")

    # -- bases ------------------------------------------------------------
    def gspca(self, kind="central"):
        key = ("gs", kind)
        if key not in self._bases:
            probe = self.probe(kind)
            with _stage("gspca"):
                self._bases[key] = gspca_fit(self.train, probe.J, probe.epsilon)
        return self._bases[key]

    def agspca_raw(self, kind="central"):
        key = ("ags-raw", kind)
        if key not in self._bases:
            with _stage("agspca"):
                self._bases[key] = agspca_fit(self.base, self.probe(kind),
                                              resort=self.config["agspca.resort"])[0]
        return self._bases[key]

    def agspca(self, kind="central"):
        """aGS-PCA basis as scored: raw, or W-orthonormal leading ``max(N1)`` columns."""
        key = ("ags", kind)
        if key not in self._bases:
            raw = self.agspca_raw(kind)
            if self.config["agspca.orthonormal"]:
                with _stage("agspca"):
                    raw = orthonormalize(raw.truncated(max(self.n1_values)))
            self._bases[key] = raw
        return self._bases[key]

    def egspca(self, kind="central", count=None):
        count = max(self.n1_values) - self.N if count is None else int(count)
        key = ("egs", kind, count)
        if key not in self._bases:
            with _stage("egspca"):
                self._bases[key] = egspca_extend(self.base, self.probe(kind), self.N, count)
        return self._bases[key]

    def basis(self, algorithm, kind="central"):
        if algorithm == "PCA":
            return self.base
        if algorithm == "GS-PCA":
            return self.gspca(kind)
        if algorithm == "aGS-PCA":
            return self.agspca(kind)
        if algorithm == "eGS-PCA":
            return self.egspca(kind)
        raise ValueError(f"unknown algorithm {algorithm!r}")

    def spectrum(self, algorithm, kind="central"):
        """Full spectrum of an algorithm's basis (the scored aGS basis is truncated)."""
        if algorithm == "aGS-PCA":
            return self.agspca_raw(kind).singular_values
        return self.basis(algorithm, kind).singular_values

    @cached_property
    def _bases(self):
        return {}

    def layout(self):
        """(algorithm, N1) pairs in report order; eGS-PCA only where N1 > N."""
        out = []
        for n1 in self.n1_values:
            for alg in ALGORITHMS:
                if alg == "eGS-PCA" and n1 <= self.N:
                    continue
                out.append((alg, n1))
        return out


class _LazyProbes(dict):
    def __init__(self, study):
        super().__init__()
        self._study = study

    def __missing__(self, kind):
        probe = self._study._make_probe(kind)
        self[kind] = probe
        return probe


def score_train(basis, samples, J, N1, spectrum=None):
    """``(omega, <|mu_Nr|^2>, <(J . mu_Nr)^2>)`` of ``basis`` truncated to ``N1``.

    ``spectrum`` overrides ``basis.singular_values`` for the energy fraction.
    """
    X = samples.data if hasattr(samples, "data") else np.asarray(samples, dtype=float)
    res = project(basis, X, N1).residual
    sv = basis.singular_values if spectrum is None else spectrum
    omega = energy_fraction(sv, N1)
    field_res = float(np.mean(np.sum(res**2, axis=0)))
    obj_res = float(np.mean((np.asarray(J) @ res) ** 2))
    return omega, field_res, obj_res


def run_train_experiment(config, study=None):
    """Train-set encoding scores of every algorithm at each ``N1``."""
    study = Study(config) if study is None else study
    probe = study.probe("central")
    rows = []
    for alg, n1 in study.layout():
        basis = study.basis(alg, "central")
        with _stage(f"score-{alg}"):
            omega, fr, orr = score_train(basis, study.train, probe.J, n1,
                                         study.spectrum(alg, "central"))
        rows.append(ScoreRow(alg, n1, omega, fr, orr, "central", "linearized"))
    meta = {
        "eps_scaled": config.eps_scaled,
        "epsilon": probe.epsilon,
        "gradient_norm": float(np.linalg.norm(probe.J)),
        "omega_N": energy_fraction(study.base.singular_values, study.N),
        "rank": study.base.rank,
        "samples": study.train.count,
        "seed": config.seed,
    }
    return ScoreReport("train", study.N, rows, meta)


def run_test_experiment(config, study=None, kinds=GRADIENT_KINDS):
    """Test-sample scores for each gradient kind, algorithm and ``N1``."""
    study = Study(config) if study is None else study
    shape = study.train.grid_shape
    rows = []
    fields = {"truth": study.mu_star.reshape(shape), "trial": study.eta.reshape(shape)}
    for kind in kinds:
        for alg, n1 in study.layout():
            basis = study.basis(alg, kind)
            with _stage(f"test-{alg}-{kind}"):
                trunc = project(basis, study.mu_star, n1)
                value = objective(study.case, trunc.reconstruction)
            omega = energy_fraction(study.spectrum(alg, kind), n1)
            rows.append(ScoreRow(alg, n1, omega, float(np.linalg.norm(trunc.residual)),
                                 value, kind, "simulated"))
            tag = alg.replace("-", "").lower()
            fields[f"{tag}_{kind}_N{n1}"] = trunc.reconstruction.reshape(shape)
    meta = {
        "eps_scaled": config.eps_scaled,
        "objective_at_trial": study.objective_at_eta,
        "trial_distance": float(np.linalg.norm(study.mu_star - study.eta)),
        "seed": config.seed,
    }
    if len(kinds) == 2:
        meta["gradient_cosine"] = gradient_cosine(study.probe(kinds[0]).J, study.probe(kinds[1]).J)
    return ScoreReport("test", study.N, rows, meta, fields)


def subspace_descent(case, basis, N, a0, steps, lr, fd_step=1e-3, normalize=False):
    """Fixed-step descent on ``a -> C(sum_i a_i phi_i)`` over the first ``N`` components.

    Gradients are central differences in coefficient space with step
    ``fd_step``.  ``normalize=True`` divides the objective by its starting
    value so ``lr`` does not depend on the objective's units.

    Returns
    -------
    (ndarray, float)
        Final coefficients and objective value.

    Raises
    ------
    DivergenceError
        When the objective increases on 5 consecutive steps.
    """
    N = int(N)
    if not 1 <= N <= basis.rank:
        raise ValueError(f"N={N} outside 1..{basis.rank}")
    if not lr > 0:
        raise ValueError("lr must be positive")
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    a = np.array(a0, dtype=float).ravel()
    if a.size != N:
        raise ValueError(f"a0 has {a.size} entries, expected {N}")
    phi = basis.components[:, :N]
    f = as_objective(case)
    value = f(phi @ a)
    scale = value if normalize and value > 0 else 1.0
    history = [value]
    rises = 0
    eye = np.eye(N) * fd_step
    for _ in range(int(steps)):
        g = np.array([(f(phi @ (a + e)) - f(phi @ (a - e))) / (2 * fd_step) for e in eye])
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient", a, history)
        if not np.any(g):
            break
        a = a - lr * g / scale
        new = f(phi @ a)
        rises = rises + 1 if new > value else 0
        value = new
        history.append(value)
        if rises >= 5 or not math.isfinite(value):
            raise DivergenceError(
                f"objective rose on {rises} consecutive steps (last {value:.6g})", a, history)
    return a, float(value)
