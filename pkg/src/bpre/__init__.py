"""Lower large deviations of supercritical branching processes in random environment."""

__version__ = "0.1.0"

from .environment import EnvironmentDiagnostics, EnvironmentLaw
from .offspring import (
    FiniteSupportDistribution,
    GeometricParametrization,
    LinearFractionalDistribution,
)
from .rates import RateFunction, chi, lambda_at, survival_rate, theta_star

__all__ = [
    "EnvironmentDiagnostics",
    "EnvironmentLaw",
    "FiniteSupportDistribution",
    "GeometricParametrization",
    "LinearFractionalDistribution",
    "RateFunction",
    "chi",
    "lambda_at",
    "survival_rate",
    "theta_star",
]
