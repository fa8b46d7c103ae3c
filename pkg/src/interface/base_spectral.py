from dataclasses import dataclass, field
from typing import Union

import numpy as np

VON_NEUMANN = "von-Neumann"
Order = Union[float, str]


@dataclass
class Spectrum:
    eigenvalues: np.ndarray  # descending
    errors: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        if self.errors is None:
            self.errors = np.zeros_like(self.eigenvalues)


@dataclass
class EntropyValue:
    order: Order  # Rényi order n, or VON_NEUMANN
    value: float  # natural-log units
    error: float = 0.0

    @property
    def key(self) -> str:
        return "vn" if self.order == VON_NEUMANN else f"{float(self.order):g}"
