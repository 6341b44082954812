"""(1, lambda)-ES with resampling on a linear function with one linear constraint.

Submodules: ``scalar_math`` (normal functions, order-statistic moments),
``problem`` (geometry and step laws), ``es_core`` (transitions and a full ES),
``markov_lab`` (chain simulation and estimators), ``boundary_search``
(critical lambda and c), ``verification`` and ``cli``.
"""
__version__ = "0.1.0"

from .boundary_search import BoundaryResult, ThresholdVerdict, c_crit, lambda_crit, run_until_threshold
from .es_core import AlgoParams, generic_csa_es
from .markov_lab import ChainSpec, EstimatorResult, csa_rate, estimate, progress_rate, run_chain
from .problem import ProblemGeometry

__all__ = [
    "AlgoParams", "BoundaryResult", "ChainSpec", "EstimatorResult", "ProblemGeometry",
    "ThresholdVerdict", "c_crit", "csa_rate", "estimate", "generic_csa_es", "lambda_crit",
    "progress_rate", "run_chain", "run_until_threshold",
]
