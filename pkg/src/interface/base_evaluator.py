from abc import ABC, abstractmethod
from typing import List

from pydantic import BaseModel


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


class BaseEvaluator(ABC):
    """Base interface for the acceptance suite."""

    @abstractmethod
    def run(self, full: bool = False) -> List[CheckResult]:
        pass
