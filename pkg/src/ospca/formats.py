"""Plain-text file formats: bases, datasets, rasters, cases, rate reports.

Every float is written with ``%.17g`` so files round-trip bit-exactly and
identical inputs give byte-identical files.

Basis file::

    OSPCA-BASIS v1 d=<d> m=<m> metric=euclidean
    OSPCA-BASIS v1 d=<d> m=<m> metric=gradient eps=<eps> J=<file>

followed by one row of ``m`` singular values and ``d`` rows of ``m``
component entries (space separated).  An optional trailing header token
``source=i0,i1,...`` records reference indices.  The gradient file named by
``J=`` holds one value per line and is resolved relative to the basis file.
"""

import configparser
from pathlib import Path

import numpy as np

from .decomposition import EUCLIDEAN, MetricDescriptor, SampleMatrix, SpectralBasis
from .reservoir import Grid2D, ReservoirCase, Well

__all__ = [
    "write_basis",
    "read_basis",
    "write_vector",
    "read_vector",
    "write_spectrum_csv",
    "write_dataset_csv",
    "read_dataset_csv",
    "write_pgm",
    "read_pgm",
    "write_case",
    "read_case",
    "write_rates_csv",
]

_FMT = "%.17g"
MAGIC = "OSPCA-BASIS"


def _row(values):
    return " ".join(_FMT % v for v in values)


def write_vector(path, values):
    path = Path(path)
    path.write_text("".join(_FMT % v + "\n" for v in np.ravel(values)))
    return path


def read_vector(path):
    return np.loadtxt(path, dtype=float, ndmin=1)


def write_basis(path, basis):
    """Write ``basis``; a gradient metric also writes ``<stem>.J.txt``."""
    path = Path(path)
    head = [MAGIC, "v1", f"d={basis.d}", f"m={basis.rank}"]
    if basis.metric.is_euclidean:
        head.append("metric=euclidean")
    else:
        jfile = path.with_name(path.stem + ".J.txt")
        write_vector(jfile, basis.metric.J)
        head += ["metric=gradient", "eps=" + _FMT % basis.metric.epsilon, f"J={jfile.name}"]
    if basis.source_index is not None:
        head.append("source=" + ",".join(str(int(i)) for i in basis.source_index))
    lines = [" ".join(head), _row(basis.singular_values)]
    lines += [_row(r) for r in basis.components]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_basis(path):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != MAGIC or header[1] != "v1":
            raise ValueError(f"{path}: not an {MAGIC} v1 file")
        meta = dict(tok.split("=", 1) for tok in header[2:])
        d, m = int(meta["d"]), int(meta["m"])
        rows = np.loadtxt(fh, dtype=float, ndmin=2)
    if rows.shape != (d + 1, m):
        raise ValueError(f"{path}: expected {(d + 1, m)} values, got {rows.shape}")
    if meta["metric"] == "euclidean":
        metric = EUCLIDEAN
    elif meta["metric"] == "gradient":
        metric = MetricDescriptor(read_vector(path.with_name(meta["J"])), float(meta["eps"]))
    else:
        raise ValueError(f"{path}: unknown metric {meta['metric']!r}")
    source = None
    if "source" in meta:
        source = np.array([int(v) for v in meta["source"].split(",")])
    return SpectralBasis(rows[1:], rows[0], metric, source)


def write_spectrum_csv(path, singular_values):
    """``index,sigma,omega`` with 1-based index and cumulative energy."""
    s = np.asarray(singular_values, dtype=float)
    omega = np.cumsum(s) / s.sum()
    lines = ["index,sigma,omega"]
    lines += [f"{i + 1},{_FMT % v},{_FMT % w}" for i, (v, w) in enumerate(zip(s, omega))]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_dataset_csv(path, samples):
    """One flattened sample per row after a ``# grid=NXxNY count=M`` header."""
    nx, ny = samples.grid_shape
    lines = [f"# grid={nx}x{ny} count={samples.count}"]
    lines += [",".join(_FMT % v for v in col) for col in samples.data.T]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_dataset_csv(path):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        if not header.startswith("# grid="):
            raise ValueError(f"{path}: missing grid header")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        nx, ny = (int(v) for v in meta["grid"].split("x"))
        data = np.loadtxt(fh, delimiter=",", dtype=float, ndmin=2)
    return SampleMatrix(data.T, (nx, ny))


def write_pgm(path, grid, lo=None, hi=None, maxval=65535):
    """Plain (P2) PGM of a 2D grid; the value range goes in a comment."""
    grid = np.asarray(grid, dtype=float)
    lo = float(grid.min()) if lo is None else float(lo)
    hi = float(grid.max()) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    levels = np.rint(np.clip((grid - lo) / span, 0.0, 1.0) * maxval).astype(int)
    rows, cols = levels.shape
    lines = ["P2", f"# ospca min={_FMT % lo} max={_FMT % hi}", f"{cols} {rows}", str(maxval)]
    lines += [" ".join(str(v) for v in r) for r in levels]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_pgm(path):
    """Grid values recovered from the level map and the recorded range."""
    text = Path(path).read_text().splitlines()
    if text[0].strip() != "P2":
        raise ValueError(f"{path}: not a plain PGM")
    meta = dict(tok.split("=", 1) for tok in text[1].lstrip("#").split()[1:])
    cols, rows = (int(v) for v in text[2].split())
    maxval = int(text[3])
    levels = np.array([[int(v) for v in line.split()] for line in text[4:4 + rows]])
    lo, hi = float(meta["min"]), float(meta["max"])
    return lo + levels.reshape(rows, cols) / maxval * (hi - lo)


def write_case(path, case):
    g = case.grid
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["grid"] = {k: _FMT % getattr(g, k) for k in ("nx", "ny", "dx", "dy", "dz")}
    cp["fluid"] = {"viscosity": _FMT % case.viscosity}
    cp["wells"] = {
        name: f"{w.role}, {w.cell // g.ny}, {w.cell % g.ny}, {_FMT % w.bhp}, {_FMT % w.rw}"
        for name, w in zip(case.well_names, case.wells)
    }
    with Path(path).open("w") as fh:
        cp.write(fh)
    return Path(path)


def read_case(path):
    """Case from ``[grid]``, ``[fluid]`` and ``[wells]`` key=value sections.

    Each well line reads ``NAME = role, i, j, bhp_pa, rw_m``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if not cp.read(path):
        raise FileNotFoundError(path)
    sec = cp["grid"]
    grid = Grid2D(int(sec.get("nx", 21)), int(sec.get("ny", 21)),
                  float(sec.get("dx", 10.0)), float(sec.get("dy", 10.0)),
                  float(sec.get("dz", 1.0)))
    wells = []
    for name, entry in cp["wells"].items():
        parts = [p.strip() for p in entry.split(",")]
        if len(parts) != 5:
            raise ValueError(f"well {name}: expected 'role, i, j, bhp, rw'")
        role, i, j, bhp, rw = parts
        wells.append(Well(grid.cell(int(i), int(j)), float(bhp), float(rw), role, name))
    visc = float(cp["fluid"].get("viscosity", 1e-3)) if cp.has_section("fluid") else 1e-3
    return ReservoirCase(grid, tuple(wells), visc)


def write_rates_csv(path, case, rates):
    lines = ["well,role,rate_m3_per_s"]
    for name, w, q in zip(case.well_names, case.wells, rates):
        lines.append(f"{name},{w.role},{_FMT % q}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)
