from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelParams(BaseModel):
    """Quantum chain parameters and the shape of the classical lattice they map to."""

    model_config = ConfigDict(frozen=True)

    J: float = Field(1.0, gt=0)
    h: float = Field(1.0, gt=0)
    dtau: float = Field(0.2, gt=0)
    L: int = Field(8, ge=2)
    k: int = Field(2, ge=1)
    l: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_subsystem(self) -> "ModelParams":
        if self.l > self.L - 1:
            raise ValueError(f"subsystem length l={self.l} must be at most L-1={self.L - 1}")
        return self

    @property
    def m(self) -> int:
        return self.k * self.L

    @property
    def beta(self) -> float:
        return self.m * self.dtau

    @property
    def rows(self) -> int:
        return self.m + 1

    def tag(self) -> str:
        return f"L{self.L}_l{self.l}_k{self.k}_dt{self.dtau:.4f}_J{self.J:.4f}_h{self.h:.4f}"


@dataclass(frozen=True)
class CouplingSet:
    j_s: float  # spatial, Δτ·J
    j_tau: float  # temporal, arctanh(exp(-2Δτh))


class SiteRole(str, Enum):
    BOUNDARY_A_TOP = "boundary-A-top"
    BOUNDARY_A_BOTTOM = "boundary-A-bottom"
    BOUNDARY_B_SHARED = "boundary-B-shared"
    CUT_LINE = "cut-line"
    SQUARE_CROSS = "square-cross"
    HEATBATH = "heatbath"


@dataclass
class SpinConfig:
    """One classical configuration; spins[i, j] with row i in [0, m], column j in [0, L)."""

    spins: np.ndarray
    roles: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.spins = np.asarray(self.spins, dtype=np.int8)
        if self.spins.ndim != 2:
            raise ValueError(f"expected a 2D spin array, got shape {self.spins.shape}")
        if not np.all(np.abs(self.spins) == 1):
            raise ValueError("every spin must be -1 or +1")

    @property
    def m(self) -> int:
        return self.spins.shape[0] - 1

    @property
    def L(self) -> int:
        return self.spins.shape[1]

    def satisfies_shared_boundary(self, l: int) -> bool:
        return bool(np.array_equal(self.spins[0, l:], self.spins[-1, l:]))


@dataclass(frozen=True)
class BasisState:
    """Product state of subsystem A; +1 is binary digit 1 and site 0 is the most significant digit."""

    bits: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if any(b not in (-1, 1) for b in self.bits):
            raise ValueError(f"basis bits must be -1 or +1, got {self.bits}")

    @property
    def l(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | (1 if b > 0 else 0)
        return value

    def label(self) -> str:
        return "".join("1" if b > 0 else "0" for b in self.bits)
