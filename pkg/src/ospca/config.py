"""Experiment configuration: flat ``section.key=value`` text.

Blank lines and ``#`` comments are ignored.  Every recognised key with its
default is listed in :data:`DEFAULTS`; unknown keys are an error.  ``seed``
drives both the train and the test stream unless ``train.seed`` /
``test.seed`` are given explicitly.
"""

import math
from dataclasses import dataclass
from pathlib import Path

from .randfield import SurfaceParams, derive_seed

__all__ = ["DEFAULTS", "ExperimentConfig", "parse_config_text", "load_config"]

DEFAULTS = {
    "seed": 1,
    "train.n": 21,
    "train.rL": 3.0,
    "train.h": 1.0,
    "train.cl": 1.0,
    "train.count": 441,
    "train.seed": None,
    "test.n": 21,
    "test.rL": 6.0,
    "test.h": 1.0,
    "test.cl": 1.0,
    "test.seed": None,
    "field.kmin": 1.0,
    "field.kmax": 100.0,
    "pca.threshold": 0.95,
    "gs.eps_scaled": 100.0,
    "experiment.n1_factors": (1.0, 1.5),
    "gradient.kind": "central",
    "gradient.fd_step": 1e-2,
    "gradient.fd_policy": "scaled",
    "gradient.workers": 1,
    "agspca.orthonormal": True,
    "agspca.resort": False,
    "egspca.count": None,
    "case.file": None,
    "case.dx": 10.0,
    "case.dy": 10.0,
    "case.dz": 1.0,
    "case.viscosity": 1e-3,
    "case.injector_bhp": 2e7,
    "case.producer_bhp": 1e7,
    "case.rw": 0.1,
    "descend.algorithm": "gspca",
    "descend.n": None,
    "descend.steps": 50,
    "descend.lr": 2.0,
    "descend.fd_step": 1e-3,
    "descend.normalize": True,
    "data.train": None,
    "data.test": None,
    "output.rasters": 4,
}

# keys whose default is None still need a type
_TYPES = {
    "train.seed": int,
    "test.seed": int,
    "egspca.count": int,
    "descend.n": int,
    "case.file": str,
    "data.train": str,
    "data.test": str,
}

_CHOICES = {
    "gradient.kind": ("central", "directional"),
    "gradient.fd_policy": ("scaled", "absolute"),
    "descend.algorithm": ("pca", "gspca", "agspca", "egspca"),
}


def _to_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(key, value):
    if key not in DEFAULTS:
        raise ValueError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if isinstance(value, str) and value.strip().lower() in ("", "none"):
        return None if default is None else default
    kind = _TYPES.get(key, type(default))
    try:
        if kind is bool:
            return _to_bool(value)
        if kind is tuple:
            items = value.split(",") if isinstance(value, str) else value
            return tuple(float(v) for v in items)
        if kind is int:
            return int(str(value), 0) if isinstance(value, str) else int(value)
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad value for {key}: {value!r}") from exc


def parse_config_text(text):
    """``key=value`` lines to a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __post_init__(self):
        vals = dict(DEFAULTS)
        for key, value in self.values.items():
            vals[key] = _coerce(key, value)
        for key, allowed in _CHOICES.items():
            if vals[key] not in allowed:
                raise ValueError(f"{key} must be one of {allowed}")
        if not 0.0 < vals["pca.threshold"] <= 1.0:
            raise ValueError("pca.threshold must lie in (0, 1]")
        if vals["gs.eps_scaled"] < 0:
            raise ValueError("gs.eps_scaled must be nonnegative")
        if not vals["experiment.n1_factors"] or min(vals["experiment.n1_factors"]) < 1.0:
            raise ValueError("experiment.n1_factors must all be >= 1")
        if vals["train.count"] < 1:
            raise ValueError("train.count must be positive")
        object.__setattr__(self, "values", vals)
        # surface parameters are validated eagerly
        self.train_params, self.test_params

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **kv):
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in kv.items()})
        return ExperimentConfig(vals)

    @property
    def seed(self):
        return int(self.values["seed"])

    @property
    def train_params(self):
        v = self.values
        seed = v["train.seed"] if v["train.seed"] is not None else derive_seed(self.seed, 1)
        return SurfaceParams(v["train.n"], v["train.rL"], v["train.h"], v["train.cl"], seed)

    @property
    def test_params(self):
        v = self.values
        seed = v["test.seed"] if v["test.seed"] is not None else derive_seed(self.seed, 2)
        return SurfaceParams(v["test.n"], v["test.rL"], v["test.h"], v["test.cl"], seed)

    @property
    def threshold(self):
        return self.values["pca.threshold"]

    @property
    def eps_scaled(self):
        return self.values["gs.eps_scaled"]

    def n1_values(self, N):
        """Subspace sizes ``ceil(f * N)`` for each factor, deduplicated in order."""
        out = []
        for f in self.values["experiment.n1_factors"]:
            n1 = int(math.ceil(f * N - 1e-12))
            if n1 not in out:
                out.append(n1)
        return out

    def dump(self):
        """Canonical text form (all keys, sorted)."""
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, tuple):
                val = ",".join(repr(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{key}={'' if val is None else val}")
        return "\n".join(lines) + "\n"


def load_config(path=None, overrides=(), seed=None):
    """Config from an optional file, ``key=value`` overrides and a seed."""
    raw = {}
    if path is not None:
        raw.update(parse_config_text(Path(path).read_text()))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if seed is not None:
        raw["seed"] = str(seed)
    return ExperimentConfig(raw)
