"""Command line entry point: ``ospca <command> [--config F] [--set k=v] [--seed S] [--out DIR]``.

Exit status is 0 on success, 1 for invalid input (bad flags, config keys or
files) and 2 for numerical failures (singular solves, divergence, ...).
Every command writes its files plus a ``report.json`` under ``--out``.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .config import load_config
from .decomposition import SampleMatrix, energy_fraction
from .experiments import (
    DivergenceError,
    StageError,
    Study,
    run_test_experiment,
    run_train_experiment,
    subspace_descent,
)
from .objective_sensitive import agspca_fit, egspca_select
from .reservoir import SimulationError, gradient_cosine, objective, simulate

__all__ = ["main", "build_parser"]

COMMANDS = {
    "generate": "draw the train set and the test field",
    "pca": "Euclidean PCA of the train set",
    "gspca": "exact gradient-sensitive PCA",
    "agspca": "first-order gradient-sensitive PCA",
    "egspca": "gradient-sensitive extension of the PCA subspace",
    "simulate": "well rates for the ground truth and the trial point",
    "gradient": "objective gradients at the trial point",
    "train-scores": "encoding scores on the train set",
    "test-scores": "projection scores for the test field",
    "descend": "fixed-step descent inside a subspace",
}

_PATH_KEYS = ("case.file", "data.train", "data.test")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one configuration key")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", default="out", metavar="DIR", help="output directory")
    parser = _Parser(prog="ospca", description="Objective-sensitive PCA experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "simulate":
            p.add_argument("--field", metavar="FILE",
                           help="log-permeability vector file to simulate instead")
    return parser


def _write_json(path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _config_dict(cfg):
    out = {}
    for key, val in cfg.values.items():
        if key in _PATH_KEYS and val:
            val = Path(val).name
        out[key] = list(val) if isinstance(val, tuple) else val
    return out


def _write_basis(out, name, basis, files):
    path = formats.write_basis(out / f"basis_{name}.txt", basis)
    files.append(path.name)
    if not basis.metric.is_euclidean:
        files.append(path.stem + ".J.txt")


def _cmd_generate(study, out, files, report):
    cfg = study.config
    files.append(formats.write_dataset_csv(out / "train.csv", study.train).name)
    test = SampleMatrix(study.test_field[:, None], study.train.grid_shape)
    files.append(formats.write_dataset_csv(out / "test.csv", test).name)
    for s in range(min(cfg["output.rasters"], study.train.count)):
        files.append(formats.write_pgm(out / f"sample_{s:03d}.pgm", study.train.sample(s)).name)
    files.append(formats.write_pgm(out / "test_field.pgm", test.sample(0)).name)
    report.update(count=study.train.count, grid=list(study.train.grid_shape),
                  train_seed=cfg.train_params.seed, test_seed=cfg.test_params.seed)


def _cmd_pca(study, out, files, report):
    base = study.base
    _write_basis(out, "pca", base, files)
    files.append(formats.write_spectrum_csv(out / "spectrum.csv", base.singular_values).name)
    report.update(N=study.N, rank=base.rank, omega_N=energy_fraction(base.singular_values, study.N),
                  trace=float(base.singular_values.sum()))


def _kind(study):
    return study.config["gradient.kind"]


def _cmd_gspca(study, out, files, report):
    basis = study.gspca(_kind(study))
    _write_basis(out, "gspca", basis, files)
    probe = study.probe(_kind(study))
    report.update(N=study.N, gradient=_kind(study), epsilon=probe.epsilon,
                  eps_scaled=study.config.eps_scaled,
                  omega_N=energy_fraction(basis.singular_values, study.N))


def _cmd_agspca(study, out, files, report):
    kind = _kind(study)
    probe = study.probe(kind)
    raw, corr = agspca_fit(study.base, probe, resort=study.config["agspca.resort"])
    _write_basis(out, "agspca", raw, files)
    if study.config["agspca.orthonormal"]:
        _write_basis(out, "agspca_orth", study.agspca(kind), files)
    report.update(N=study.N, gradient=kind, epsilon=probe.epsilon,
                  guarded_pairs=corr.guarded_pairs,
                  max_abs_alpha=float(np.max(np.abs(corr.alpha))))


def _cmd_egspca(study, out, files, report):
    kind = _kind(study)
    count = study.config["egspca.count"]
    if count is None:
        count = max(study.n1_values) - study.N
    basis = study.egspca(kind, count)
    _write_basis(out, "egspca", basis, files)
    picked = egspca_select(study.probe(kind), study.N, count) if count else []
    report.update(N=study.N, gradient=kind, count=count, selected=picked)


def _cmd_simulate(study, out, files, report, field=None):
    case = study.case
    if field is not None:
        mu = formats.read_vector(field)
        rates = simulate(case, mu, check=True)
        report.update(field=Path(field).name, objective=objective(case, mu))
    else:
        rates = case.S0
        report.update(objective_at_trial=study.objective_at_eta)
    files.append(formats.write_rates_csv(out / "rates.csv", case, rates).name)
    report.update(rates=[float(q) for q in rates], mass_balance=float(np.sum(rates)))


def _cmd_gradient(study, out, files, report):
    probes = {}
    for kind in ("central", "directional"):
        probes[kind] = study.probe(kind)
        files.append(formats.write_vector(out / f"gradient_{kind}.txt", probes[kind].J).name)
        files.append(formats.write_vector(out / f"gradient_{kind}_b.txt", probes[kind].b).name)
    report.update(N=study.N,
                  norms={k: float(np.linalg.norm(p.J)) for k, p in probes.items()},
                  cosine=gradient_cosine(probes["central"].J, probes["directional"].J))


def _cmd_train_scores(study, out, files, report):
    rep = run_train_experiment(study.config, study)
    (out / "train_scores.csv").write_text(rep.to_csv())
    files.append("train_scores.csv")
    files.append(formats.write_dataset_csv(out / "train.csv", study.train).name)
    files.append(formats.write_vector(out / "gradient_central.txt", study.probe("central").J).name)
    for alg, name in (("PCA", "pca"), ("GS-PCA", "gspca"), ("aGS-PCA", "agspca"),
                      ("eGS-PCA", "egspca")):
        _write_basis(out, name, study.basis(alg, "central"), files)
    report.update(rep.as_dict())


def _cmd_test_scores(study, out, files, report):
    rep = run_test_experiment(study.config, study)
    (out / "test_scores.csv").write_text(rep.to_csv())
    files.append("test_scores.csv")
    lo = min(float(g.min()) for g in rep.fields.values())
    hi = max(float(g.max()) for g in rep.fields.values())
    for name, grid in rep.fields.items():
        # a shared range keeps the rasters comparable
        files.append(formats.write_pgm(out / f"projection_{name}.pgm", grid, lo, hi).name)
    report.update(rep.as_dict())


def _cmd_descend(study, out, files, report):
    cfg = study.config
    alg = {"pca": "PCA", "gspca": "GS-PCA", "agspca": "aGS-PCA",
           "egspca": "eGS-PCA"}[cfg["descend.algorithm"]]
    kind = _kind(study)
    basis = study.basis(alg, kind)
    n = cfg["descend.n"] or study.N
    if n > basis.rank:
        raise ValueError(f"descend.n={n} exceeds the basis rank {basis.rank}")
    a0 = basis.components[:, :n].T @ basis.metric.apply(study.eta)
    start = objective(study.case, basis.components[:, :n] @ a0)
    a, value = subspace_descent(study.case, basis, n, a0, cfg["descend.steps"], cfg["descend.lr"],
                                cfg["descend.fd_step"], cfg["descend.normalize"])
    files.append(formats.write_vector(out / "descent_coefficients.txt", a).name)
    report.update(algorithm=alg, gradient=kind, N=n, initial_objective=start,
                  final_objective=value)


_HANDLERS = {
    "generate": _cmd_generate,
    "pca": _cmd_pca,
    "gspca": _cmd_gspca,
    "agspca": _cmd_agspca,
    "egspca": _cmd_egspca,
    "simulate": _cmd_simulate,
    "gradient": _cmd_gradient,
    "train-scores": _cmd_train_scores,
    "test-scores": _cmd_test_scores,
    "descend": _cmd_descend,
}


def run(args):
    cfg = load_config(args.config, args.overrides, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    study = Study(cfg)
    files = []
    report = {"command": args.command}
    if args.command == "simulate":
        _cmd_simulate(study, out, files, report, args.field)
    else:
        _HANDLERS[args.command](study, out, files, report)
    report["config"] = _config_dict(cfg)
    report["files"] = sorted(set(files))
    _write_json(out / "report.json", report)
    return report


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        run(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if exc.is_validation else 2
    except (np.linalg.LinAlgError, SimulationError, DivergenceError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
