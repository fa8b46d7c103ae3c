from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .base_lattice import ModelParams
from .base_spectral import EntropyValue, Spectrum


@dataclass
class TransferMatrix:
    """Row-to-row transfer factors on 2^L row states (site 0 is the most significant bit)."""

    dim: int
    step: np.ndarray  # T[r, r'] = exp(j_tau Σ r_j r'_j)
    diag_full: np.ndarray  # exp(j_s Σ r_j r_{j+1})
    diag_half: np.ndarray  # its square root, for rows 0 and m


@dataclass
class ClassicalRDM:
    """Exact classical ρ_A at finite (m, Δτ) plus log Z^cl_{μ_A,ν_A} for every element."""

    params: ModelParams
    rho: np.ndarray
    log_z: np.ndarray
    log_Z: float  # log of the trace, Σ_μ Z^cl_{μ,μ}
    method: str = ""


@dataclass
class QuantumSystem:
    L: int
    J: float
    h: float
    hamiltonian: Optional[np.ndarray]  # dense, None when only the sparse form was built
    ground_state: np.ndarray
    energy: float
    gap: float
    degenerate: bool = False


@dataclass
class QuantumRDM:
    system: QuantumSystem
    l: int
    rho: np.ndarray
    spectrum: Spectrum
    entropies: List[EntropyValue] = field(default_factory=list)


class BaseOracle(ABC):
    @abstractmethod
    def classical_rdm(self, params: ModelParams) -> ClassicalRDM:
        pass
