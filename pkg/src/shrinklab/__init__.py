"""Numerical toolkit for curvature functions, self-similar shrinkers and contracting flows."""
from .symfun import (
    DomainError,
    SpecError,
    SpeedFunction,
    combo,
    derivs,
    dual,
    ek_root,
    eval,
    geomean,
    normalized,
    parse_spec,
    power_mean,
    quotient,
    scaled,
)
from .hypersurface import AxiConvexBody, AxiGraphHemisphere, ConvexityError, read_profile, write_profile
from .solver import ShrinkerProblem, run_flow, slice_radius, solve_shrinker, sphere_radius

__version__ = "0.1.0"
