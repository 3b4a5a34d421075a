"""Local subexponential asymptotics on a grid.

Window (Delta) probabilities F(x, x+T] of heavy-tailed laws: exact grid
convolutions, class-membership diagnostics, randomly stopped sums, the
supremum of a random walk with negative drift, transient renewal theory and
compound laws built from them.
"""
from htl.kernels import BACKEND
from htl.measures import (
    CATALOG_KINDS,
    DeltaWindow,
    DensityGrid,
    Distribution,
    GridMeasure,
    GridSpec,
    ParameterError,
    discretize,
    make_distribution,
)
from htl.series import RatioSeries, classify, geometric_schedule

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CATALOG_KINDS",
    "DeltaWindow",
    "DensityGrid",
    "Distribution",
    "GridMeasure",
    "GridSpec",
    "ParameterError",
    "RatioSeries",
    "classify",
    "discretize",
    "geometric_schedule",
    "make_distribution",
]
