"""Objective-sensitive principal component analysis for field parameterisation.

Submodules
----------
decomposition
    Second-moment PCA, projections, energy criterion.
objective_sensitive
    GS-PCA, its first-order approximation aGS-PCA and the eGS-PCA extension.
randfield
    Seeded Gaussian random surfaces rescaled to log-permeability.
reservoir
    Steady Darcy forward model, objective and gradient estimates.
experiments, config, formats, cli
    Studies, configuration, file formats and the command line.
"""

from .decomposition import (
    EUCLIDEAN,
    MetricDescriptor,
    SampleMatrix,
    SpectralBasis,
    Truncation,
    energy_fraction,
    pca_fit,
    project,
    select_dimension,
    subspace_angle,
)
from .objective_sensitive import (
    GradientProbe,
    agspca_fit,
    egspca_extend,
    egspca_select,
    gspca_fit,
    make_probe,
)
from .randfield import SurfaceParams, generate_field, make_dataset
from .reservoir import ReservoirCase, default_case, objective, simulate

__version__ = "0.1.0"

__all__ = [
    "EUCLIDEAN",
    "MetricDescriptor",
    "SampleMatrix",
    "SpectralBasis",
    "Truncation",
    "energy_fraction",
    "pca_fit",
    "project",
    "select_dimension",
    "subspace_angle",
    "GradientProbe",
    "agspca_fit",
    "egspca_extend",
    "egspca_select",
    "gspca_fit",
    "make_probe",
    "SurfaceParams",
    "generate_field",
    "make_dataset",
    "ReservoirCase",
    "default_case",
    "objective",
    "simulate",
]
