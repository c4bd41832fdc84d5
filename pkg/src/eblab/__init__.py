"""Empirical Bayes posteriors and merging diagnostics against fixed-prior Bayes."""
from .core import EBResult, HyperParam, MergingCurve, marginal_mle
from .errors import (BracketError, CapacityError, ConfigError, ConvergenceError, DomainError,
                     ModelError, ScenarioError)
from .posterior import (DensityGrid, DiscreteWeights, GaussianCF, MultiGaussianCF, ParticleCloud,
                        PointMass, ScaledStudentCF)
from .stats import QuadSpec, RngStream

__version__ = "0.1.0"

__all__ = [
    "BracketError", "CapacityError", "ConfigError", "ConvergenceError", "DensityGrid",
    "DiscreteWeights", "DomainError", "EBResult", "GaussianCF", "HyperParam", "MergingCurve",
    "ModelError", "MultiGaussianCF", "ParticleCloud", "PointMass", "QuadSpec", "RngStream",
    "ScaledStudentCF", "ScenarioError", "marginal_mle",
]
