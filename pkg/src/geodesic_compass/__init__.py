"""Poisson-paced random motion on hyperbolic geodesics (and on the sphere).

The distance from the origin after time ``t`` is a product of ``cosh`` of the
leg durations (``cos`` on the sphere).  The package provides closed-form
moments, a quadrature oracle for the underlying ordered integrals, and a
seeded Monte Carlo sampler to check them against each other.
"""
from .closed_form import (
    SeriesControl,
    conditional_mean_cosh,
    gamma_mixture_mean,
    jumpback_mean,
    mean_cosh,
    radius_bound_mean,
    second_moment,
    spherical_mean,
)
from .errors import (
    ConditioningError,
    DiscretizationError,
    NumericalError,
    QuadratureError,
    SeriesTruncationError,
)
from .params import ModelParams
from .sampler import Condition, EstimateReport, SeedSpec, estimate

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "SeriesControl",
    "mean_cosh",
    "conditional_mean_cosh",
    "second_moment",
    "jumpback_mean",
    "gamma_mixture_mean",
    "radius_bound_mean",
    "spherical_mean",
    "Condition",
    "SeedSpec",
    "EstimateReport",
    "estimate",
    "NumericalError",
    "SeriesTruncationError",
    "QuadratureError",
    "DiscretizationError",
    "ConditioningError",
]
