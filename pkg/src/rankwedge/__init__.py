"""Simulation and verification tools for two ranked particles reflected in the quadrant."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConsistencyError,
    DomainError,
    NonConvergence,
    RankWedgeError,
    UnsupportedSigma,
)
from .model import (
    Classification,
    Corner,
    ModelParams,
    Recurrence,
    WedgeGeometry,
    classify,
    classify_corner,
    classify_hobson_rogers,
    classify_recurrence,
    wedge_geometry,
)
from .rng import PathSeed
from .skorokhod import RegulatorPair, SampledPath, skorokhod_reflect_1d, solve_coupled_regulators

