from abc import ABC, abstractmethod
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator

from .base_lattice import ModelParams

DEFAULT_STAGES = [(0.003, 30000), (0.001, 30000), (0.0001, 30000), (0.00001, 30000)]


class TrainConfig(BaseModel):
    batch_size: int = Field(2048, ge=1)
    stages: List[Tuple[float, int]] = Field(default_factory=lambda: list(DEFAULT_STAGES))
    adam: Tuple[float, float, float] = (0.9, 0.999, 1e-8)
    seed: int = 0
    checkpoint_every: int = Field(1000, ge=1)
    ess_probe: Tuple[int, int] = (500, 4096)  # (interval in epochs, sample count)
    hidden_factor: int = Field(4, ge=1)
    max_rollbacks: int = Field(2, ge=0)

    @field_validator("stages")
    @classmethod
    def _check_stages(cls, stages: List[Tuple[float, int]]) -> List[Tuple[float, int]]:
        if not stages:
            raise ValueError("at least one training stage is required")
        rates = [lr for lr, _ in stages]
        if any(lr <= 0 for lr in rates):
            raise ValueError("learning rates must be positive")
        if any(b > a for a, b in zip(rates, rates[1:])):
            raise ValueError("stage learning rates must be non-increasing")
        if any(epochs < 0 for _, epochs in stages):
            raise ValueError("epochs per stage must be non-negative")
        return stages


class EpochRecord(BaseModel):
    epoch: int
    f_q_mean: float
    f_q_std: float
    ess: Optional[float] = None
    lr: float


class TrainReport(BaseModel):
    params: ModelParams
    records: List[EpochRecord] = Field(default_factory=list)
    ess_probes: List[Tuple[int, float]] = Field(default_factory=list)
    wall_clock: float = 0.0
    checkpoint_id: Optional[str] = None
    rollbacks: int = 0


class BaseTrainer(ABC):
    @abstractmethod
    def train(self, params: ModelParams, tc: TrainConfig) -> TrainReport:
        pass
