"""Social learning over networks with partial belief sharing.

Agents update beliefs over a finite hypothesis set with local Bayes steps and
fuse neighbors' beliefs geometrically. Besides full sharing, agents can share
a single hypothesis per round, either fixed (missing entries filled
uniformly) or drawn at random from a trend distribution (missing entries
filled from the receiver's own intermediate belief).
"""

from .core import FixedPartial, FullSharing, NetworkState, TrendingBootstrap, advance, step
from .engine import ExperimentConfig, RunTrace, run_experiment, run_single
from .models import GaussianLikelihood, FiniteLikelihood, LikelihoodModel, TrendDistribution
from .network import CombinationMatrix, Topology, build_metropolis

__version__ = "0.1.0"

__all__ = [
    "CombinationMatrix", "ExperimentConfig", "FiniteLikelihood", "FixedPartial", "FullSharing",
    "GaussianLikelihood", "LikelihoodModel", "NetworkState", "RunTrace", "Topology",
    "TrendDistribution", "TrendingBootstrap", "advance", "build_metropolis", "run_experiment",
    "run_single", "step",
]
