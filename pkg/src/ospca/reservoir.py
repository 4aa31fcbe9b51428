"""Steady single-phase Darcy flow on a 2D grid with pressure-controlled wells.

This is a deliberately small forward model: incompressible flow, cell-centred
two-point flux approximation (harmonic face permeabilities) and Peaceman
well indices.  Wells run at fixed bottom-hole pressure and the observations
are the steady volumetric well rates in m^3/s, positive for injection.

Permeability enters as ``K = exp(mu)`` in milli-Darcy; ``MILLIDARCY`` converts
to m^2.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .objective_sensitive import GradientProbe

__all__ = [
    "MILLIDARCY",
    "Grid2D",
    "Well",
    "ReservoirCase",
    "SimulationError",
    "QuadraticObjective",
    "default_case",
    "five_spot_wells",
    "with_observations",
    "assemble",
    "solve_pressure",
    "simulate",
    "objective",
    "as_objective",
    "fd_steps",
    "fd_gradient_central",
    "direction_gradient",
    "gradient_cosine",
]

MILLIDARCY = 9.869233e-16  # m^2


class SimulationError(RuntimeError):
    """Forward model failure; ``index`` names the probe that failed, if any."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Grid2D:
    nx: int = 21
    ny: int = 21
    dx: float = 10.0
    dy: float = 10.0
    dz: float = 1.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")
        if not (self.dx > 0 and self.dy > 0 and self.dz > 0):
            raise ValueError("cell sizes must be positive")

    @property
    def size(self):
        return self.nx * self.ny

    def cell(self, i, j):
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"cell ({i}, {j}) outside the grid")
        return i * self.ny + j


@dataclass(frozen=True)
class Well:
    cell: int
    bhp: float
    rw: float = 0.1
    role: str = "producer"
    name: str = ""

    def __post_init__(self):
        if self.role not in ("injector", "producer"):
            raise ValueError(f"unknown well role {self.role!r}")
        if not self.rw > 0:
            raise ValueError("wellbore radius must be positive")


@dataclass(frozen=True)
class ReservoirCase:
    grid: Grid2D
    wells: tuple
    viscosity: float = 1e-3
    S0: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        wells = tuple(self.wells)
        if not wells:
            raise ValueError("a case needs at least one well")
        if not self.viscosity > 0:
            raise ValueError("viscosity must be positive")
        limit = min(self.grid.dx, self.grid.dy) / 2
        for w in wells:
            if not 0 <= w.cell < self.grid.size:
                raise ValueError(f"well {w.name or w.cell} outside the grid")
            if not w.rw < limit:
                raise ValueError(f"well {w.name or w.cell}: rw must be < {limit}")
        object.__setattr__(self, "wells", wells)
        if self.S0 is not None:
            S0 = np.asarray(self.S0, dtype=float).ravel()
            if S0.size != len(wells) or not np.all(np.isfinite(S0)):
                raise ValueError("observations must be finite, one per well")
            object.__setattr__(self, "S0", S0)

    @property
    def well_names(self):
        return [w.name or f"W{k}" for k, w in enumerate(self.wells)]


def five_spot_wells(grid, injector_bhp=2e7, producer_bhp=1e7, rw=0.1):
    """Injector in the central cell, producers in the four corners."""
    ci, cj = grid.nx // 2, grid.ny // 2
    wells = [Well(grid.cell(ci, cj), injector_bhp, rw, "injector", "INJ")]
    corners = [(0, 0), (0, grid.ny - 1), (grid.nx - 1, 0), (grid.nx - 1, grid.ny - 1)]
    for k, (i, j) in enumerate(corners, start=1):
        wells.append(Well(grid.cell(i, j), producer_bhp, rw, "producer", f"PROD{k}"))
    return tuple(wells)


def default_case():
    grid = Grid2D()
    return ReservoirCase(grid, five_spot_wells(grid), viscosity=1e-3)


def with_observations(case, mu_true):
    """Copy of ``case`` whose observations are the rates simulated at ``mu_true``."""
    return replace(case, S0=simulate(case, mu_true))


def _permeability(case, mu):
    mu = np.asarray(mu, dtype=float)
    if mu.size != case.grid.size:
        raise ValueError(f"field has {mu.size} cells, grid has {case.grid.size}")
    with np.errstate(over="ignore"):
        perm = np.exp(mu.reshape(case.grid.nx, case.grid.ny)) * MILLIDARCY
    if not np.all(np.isfinite(perm)) or not np.all(perm > 0):
        raise SimulationError("non-finite or non-positive permeability")
    return perm


def _well_index(case, k_cell, well):
    g = case.grid
    r_eq = 0.14 * np.hypot(g.dx, g.dy)
    return 2.0 * np.pi * k_cell * g.dz / (case.viscosity * np.log(r_eq / well.rw))


def assemble(case, mu):
    """Pressure system ``A p = q`` and the well indices.

    ``A`` is the TPFA matrix plus the well terms on the diagonal; it is
    symmetric positive definite whenever at least one well is present.
    """
    g = case.grid
    perm = _permeability(case, mu)
    rows, cols, vals = _kernels.tpfa_triplets(perm, g.dx, g.dy, g.dz, case.viscosity)
    flat = perm.ravel()
    wi = np.array([_well_index(case, flat[w.cell], w) for w in case.wells])
    cells = np.array([w.cell for w in case.wells])
    bhp = np.array([w.bhp for w in case.wells], dtype=float)
    rows = np.concatenate([rows, cells])
    cols = np.concatenate([cols, cells])
    vals = np.concatenate([vals, wi])
    A = sp.csc_matrix((vals, (rows, cols)), shape=(g.size, g.size))
    rhs = np.zeros(g.size)
    np.add.at(rhs, cells, wi * bhp)
    return A, rhs, wi


def solve_pressure(case, mu):
    """Cell pressures (Pa) and well rates (m^3/s, + = injection)."""
    A, rhs, wi = assemble(case, mu)
    p = spla.spsolve(A, rhs)
    if not np.all(np.isfinite(p)):
        raise SimulationError("pressure solve failed")
    cells = np.array([w.cell for w in case.wells])
    bhp = np.array([w.bhp for w in case.wells], dtype=float)
    return p, wi * (bhp - p[cells])


def simulate(case, mu, check=False):
    """Steady well rates for log-permeability ``mu`` (any shape with nx*ny cells).

    ``check=True`` also asserts incompressible mass balance.
    """
    _, rates = solve_pressure(case, mu)
    if check:
        scale = np.max(np.abs(rates))
        if abs(rates.sum()) > 1e-10 * scale:
            raise SimulationError(f"mass balance violated: sum of rates {rates.sum():.3e}")
    return rates


def objective(case, mu):
    """Squared rate mismatch ``|S(mu) - S0|^2``."""
    if case.S0 is None:
        raise ValueError("case has no observations; see with_observations()")
    diff = simulate(case, mu) - case.S0
    return float(diff @ diff)


class QuadraticObjective:
    """``C(mu) = |mu - target|^2``, handy where the optimum must be known."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float).ravel()

    def __call__(self, mu):
        r = np.asarray(mu, dtype=float).ravel() - self.target
        return float(r @ r)

    def gradient(self, mu):
        return 2.0 * (np.asarray(mu, dtype=float).ravel() - self.target)


def as_objective(case):
    """Callable ``mu -> C(mu)`` for a case or an already-callable objective."""
    if isinstance(case, ReservoirCase):
        return lambda mu: objective(case, mu)
    if callable(case):
        return case
    raise TypeError("expected a ReservoirCase or a callable objective")


def fd_steps(basis, count, delta=1e-2, policy="scaled"):
    """Coefficient steps: ``delta * sqrt(sigma_i)`` or a flat ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if policy == "absolute":
        return np.full(count, float(delta))
    if policy != "scaled":
        raise ValueError(f"unknown step policy {policy!r}")
    steps = delta * np.sqrt(basis.singular_values[:count])
    # directions with zero energy fall back to the flat step
    return np.where(steps > 0, steps, delta)


def fd_gradient_central(case, basis, eta, probe_count, delta=1e-2, policy="scaled",
                        workers=1):
    """Central differences of ``C`` along the first ``probe_count`` components.

    Returns a probe with ``J = sum_i b_i phi_i`` restricted to the probed
    subspace; ``b`` has zeros past ``probe_count``.  Costs ``2 *
    probe_count`` objective evaluations.
    """
    probe_count = int(probe_count)
    if not 1 <= probe_count <= basis.rank:
        raise ValueError(f"probe_count={probe_count} outside 1..{basis.rank}")
    f = as_objective(case)
    eta = np.asarray(eta, dtype=float).ravel()
    steps = fd_steps(basis, probe_count, delta, policy)

    def one(i):
        step = steps[i] * basis.components[:, i]
        try:
            hi, lo = f(eta + step), f(eta - step)
        except Exception as exc:
            raise SimulationError(f"objective failed on probe {i}: {exc}", index=i) from exc
        return (hi - lo) / (2.0 * steps[i])

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            head = list(pool.map(one, range(probe_count)))
    else:
        head = [one(i) for i in range(probe_count)]
    b = np.zeros(basis.rank)
    b[:probe_count] = head
    J = basis.components[:, :probe_count] @ b[:probe_count]
    return GradientProbe(eta, J, 0.0, b)


def direction_gradient(eta, mu_star_trunc2N, C_at_eta, basis, N):
    """Two-point gradient pointing from ``eta`` toward the ground truth.

    ``J = -(C/|r|) r/|r|`` with ``r = mu_star - eta``; ``b_i = 0`` for the
    first ``N`` components and ``phi_i . J`` for the rest.  Only available
    when the ground truth is known.
    """
    eta = np.asarray(eta, dtype=float).ravel()
    r = np.asarray(mu_star_trunc2N, dtype=float).ravel() - eta
    norm = float(np.linalg.norm(r))
    if norm == 0:
        raise ValueError("ground truth coincides with the trial point")
    if C_at_eta < 0:
        raise ValueError("objective value must be nonnegative")
    slope = C_at_eta / norm
    J = -slope * r / norm
    b = np.zeros(basis.rank)
    b[N:] = -slope * (basis.components[:, N:].T @ r) / norm
    return GradientProbe(eta, J, 0.0, b)


def gradient_cosine(J1, J2):
    J1 = np.asarray(J1, dtype=float).ravel()
    J2 = np.asarray(J2, dtype=float).ravel()
    n1, n2 = np.linalg.norm(J1), np.linalg.norm(J2)
    if n1 == 0 or n2 == 0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(J1 @ J2 / (n1 * n2), -1.0, 1.0))
