import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class SeriesPoint:
    dtau: float
    k: int
    value: float
    error: float


@dataclass
class EntropySeries:
    """Entropy values over a (Δτ, k) grid for one quantity and one subsystem size."""

    points: List[SeriesPoint]
    quantity: str = "vn"
    l: int = 1

    def __post_init__(self) -> None:
        seen = set()
        for p in self.points:
            if not p.error > 0:
                raise ValueError(f"error at (dtau={p.dtau}, k={p.k}) must be positive, got {p.error}")
            key = (p.dtau, p.k)
            if key in seen:
                raise ValueError(f"duplicate point (dtau={p.dtau}, k={p.k})")
            seen.add(key)

    def dtaus(self) -> List[float]:
        return sorted({p.dtau for p in self.points}, reverse=True)

    def at(self, dtau: float) -> List[SeriesPoint]:
        return sorted((p for p in self.points if p.dtau == dtau), key=lambda p: p.k)


@dataclass
class SingleFit:
    """y(k) = a + b·exp(-c·k) at one Δτ."""

    dtau: float
    a: float
    b: float
    c: float
    errors: Tuple[float, float, float]
    chi2_dof: float
    converged: bool = True


@dataclass
class LineFit:
    intercept: float
    slope: float
    covariance: np.ndarray
    chi2_dof: float

    @property
    def intercept_err(self) -> float:
        return math.sqrt(max(self.covariance[0, 0], 0.0))


@dataclass
class FitResult:
    S: float
    a1: float
    bc: Dict[float, Tuple[float, float]]
    covariance: np.ndarray
    chi2_dof: float
    stat_err: float
    sys_err: float = 0.0
    a2: Optional[float] = None  # cubic variant's Δτ³ coefficient
    S_cubic: Optional[float] = None
    quantity: str = "vn"
    l: int = 1
    iterations: int = 0
    bc_err: Dict[float, Tuple[float, float]] = field(default_factory=dict)
    converged: bool = True

    @property
    def total_err(self) -> float:
        return math.hypot(self.stat_err, self.sys_err)

    def to_row(self) -> List:
        params = ";".join(f"dt={d:g}:b={b:.10g}:c={c:.10g}" for d, (b, c) in sorted(self.bc.items()))
        return [self.quantity, self.l, self.S, self.stat_err, self.sys_err, self.total_err, self.chi2_dof, self.a1, params, self.converged]


FIT_COLUMNS = ["quantity", "l", "S", "stat_err", "sys_err", "total_err", "chi2_dof", "a1", "parameters", "converged"]


class BaseExtrapolator(ABC):
    @abstractmethod
    def fit_combined(self, series: EntropySeries) -> FitResult:
        pass
