"""Affine-connection geometry and numerical checks for linear observed systems."""

__version__ = "0.1.0"

from .kernel import DimensionError, GuardViolation, IntegrationDiverged, OdeConfig, RankDeficiency
from .manifolds import SO3, Euclidean, Heisenberg, Sphere2, make_manifold
from .flows import (
    ConstantInput,
    GradientLike,
    LeftInvariant,
    LinearField,
    PiecewiseConstantInput,
    RightPerturbed,
    SigmaCross,
    SinusoidInput,
    flow,
)
from .report import CheckReport
from .suite import SuiteConfig, run_suite

__all__ = [
    "CheckReport", "ConstantInput", "DimensionError", "Euclidean", "GradientLike", "GuardViolation",
    "Heisenberg", "IntegrationDiverged", "LeftInvariant", "LinearField", "OdeConfig",
    "PiecewiseConstantInput", "RankDeficiency", "RightPerturbed", "SO3", "SigmaCross", "SinusoidInput",
    "Sphere2", "SuiteConfig", "flow", "make_manifold", "run_suite",
]
