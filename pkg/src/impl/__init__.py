from .han import HierarchicalSampler, build_hierarchy
from .training import Trainer
from .estimator import NISEstimator
from .extrapolate import CombinedExtrapolator
from .oracle import ExactChain, ExactOracle
from .evaluator import AcceptanceEvaluator

__all__ = [
    "HierarchicalSampler",
    "build_hierarchy",
    "Trainer",
    "NISEstimator",
    "CombinedExtrapolator",
    "ExactChain",
    "ExactOracle",
    "AcceptanceEvaluator",
]
