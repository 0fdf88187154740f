"""Numerics for marked point configurations: sampling of the marked point
process, the diffeomorphism/current group action with exact densities, the
gradient/divergence/Dirichlet calculus on cylinder functionals, and the
orthogonal chaos layer, all backed by Monte Carlo and quadrature checks."""

from .configuration import ConfigBatch, MarkedConfiguration
from .errors import ConfigError, DomainError, MarkcfgError, NumericsError, UsageError
from .flows import BumpCurrent, BumpVectorField, Window, flow, inverse_flow
from .intensity import IntensityModel, MixingLaw
from .marks import get_marks
from .sampling import mc_estimate, sample_batch, sample_configuration
from .scenarios import build_scenario

__version__ = "0.1.0"

__all__ = [
    "MarkedConfiguration",
    "ConfigBatch",
    "Window",
    "BumpVectorField",
    "BumpCurrent",
    "flow",
    "inverse_flow",
    "IntensityModel",
    "MixingLaw",
    "get_marks",
    "build_scenario",
    "sample_configuration",
    "sample_batch",
    "mc_estimate",
    "MarkcfgError",
    "UsageError",
    "ConfigError",
    "NumericsError",
    "DomainError",
    "__version__",
]
