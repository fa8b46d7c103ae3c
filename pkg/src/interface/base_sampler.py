from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import torch

Site = Tuple[int, int]


@dataclass
class GroupSample:
    spins: torch.Tensor  # (batch, n_out), ±1 in network order
    log_q: torch.Tensor  # (batch,)


@dataclass(frozen=True)
class NetSpec:
    net_id: str
    kind: str
    n_ctx: int
    n_out: int


@dataclass
class SpinGroup:
    """Sites generated together, the sites they condition on and the net that generates them."""

    kind: str  # boundary-B | cut-line | square-cross | heatbath
    sites: List[Site]
    context_sites: List[Site]
    net_id: str  # "heatbath" for exact conditionals
    level: int = 0
    mirror_sites: List[Site] = field(default_factory=list)

    def dump(self) -> str:
        coords = " ".join(f"({r},{c})" for r, c in self.sites)
        return f"{self.kind} {self.level} {self.net_id} : {coords}"


@dataclass
class HierarchyPlan:
    L: int
    m: int
    l: int
    groups: List[SpinGroup]
    net_specs: List[NetSpec]

    def fixed_sites(self) -> List[Site]:
        return [(0, j) for j in range(self.l)] + [(self.m, j) for j in range(self.l)]

    def spec(self, net_id: str) -> NetSpec:
        return self._specs_by_id()[net_id]

    def _specs_by_id(self) -> Dict[str, NetSpec]:
        return {s.net_id: s for s in self.net_specs}

    def dump(self) -> str:
        return "\n".join(group.dump() for group in self.groups)


@dataclass
class FullSample:
    spins: torch.Tensor  # (batch, m+1, L)
    log_q: torch.Tensor  # (batch,), log q(s \ {μ_A, ν_A}) including heatbath conditionals
    boundaries: Optional[torch.Tensor] = None  # (batch, 2l) fixed μ_A | ν_A spins


class BaseSampler(ABC):
    """Draws full lattice configurations conditioned on the fixed subsystem-A boundary rows."""

    @abstractmethod
    def sample_configuration(self, boundaries: torch.Tensor, generator: torch.Generator) -> FullSample:
        pass

    @abstractmethod
    def log_prob(self, spins: torch.Tensor) -> torch.Tensor:
        pass
