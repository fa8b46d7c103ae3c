from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .base_lattice import BasisState, ModelParams


@dataclass
class WeightStats:
    """Importance log-weights log ŵ = -Ẽ - log q for one (μ_A, ν_A) element."""

    log_weights: np.ndarray
    n: int
    log_mean: float
    ess: float
    mu: int = 0
    nu: int = 0
    seed: int = 0
    low_ess: bool = False


@dataclass
class BootstrapResult:
    replicas: int
    element_err: np.ndarray  # (dim, dim)
    eigenvalue_err: np.ndarray  # (dim,), descending order
    entropy_err: Dict[str, float] = field(default_factory=dict)  # "vn", "2", "3", ...
    trace_err: float = 0.0
    asymmetry_err: Optional[np.ndarray] = None  # std of ρ - ρᵀ over unsymmetrized replicas


@dataclass
class DensityMatrixEstimate:
    dim: int
    raw: np.ndarray  # log-mean weights per (μ_A, ν_A)
    rho: np.ndarray
    err: np.ndarray
    params: ModelParams
    n_samples: np.ndarray
    seed: int = 0
    checkpoint_id: Optional[str] = None
    ess: Optional[np.ndarray] = None
    asymmetry: Optional[np.ndarray] = None  # |ρ_μν - ρ_νμ| before symmetrization
    asymmetry_flag: bool = False
    z2_deviation: Optional[float] = None  # max |ρ_μν - ρ_flip(μ)flip(ν)| in units of σ
    symmetrized: bool = False
    bootstrap: Optional[BootstrapResult] = None
    stats: List[List[WeightStats]] = field(default_factory=list)


class BaseEstimator(ABC):
    @abstractmethod
    def estimate_partition(self, mu: BasisState, nu: BasisState, n_samples: int, seed: int) -> WeightStats:
        pass

    @abstractmethod
    def estimate_rdm(self, n_samples: int, seed: int) -> DensityMatrixEstimate:
        pass
