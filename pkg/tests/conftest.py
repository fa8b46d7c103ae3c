from pathlib import Path

import numpy as np
import pytest
import torch

from src.impl.autoreg import DTYPE
from src.impl.han import HierarchicalSampler
from src.impl.training import Trainer
from src.interface import ModelParams, TrainConfig
from src.util.run_config import RunConfig, load_config

FIXTURES = Path(__file__).resolve().parents[1] / "sample_data" / "fixtures"


@pytest.fixture
def small_params() -> ModelParams:
    return ModelParams(J=1.0, h=1.0, dtau=0.4, L=4, k=2, l=1)


@pytest.fixture
def tiny_params() -> ModelParams:
    # 8 free spins: small enough to enumerate every completion
    return ModelParams(J=1.0, h=1.0, dtau=0.4, L=3, k=1, l=1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def generator() -> torch.Generator:
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def untrained_sampler(tiny_params) -> HierarchicalSampler:
    return Trainer(progress=False).setup(tiny_params, TrainConfig(seed=3))


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("HAN_CONFIG", "HAN_SEED", "HAN_JOBS", "HAN_LOG_LEVEL", "HAN_TORCH_THREADS"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    config = load_config(FIXTURES / "tiny.toml")
    config.paths.checkpoints = tmp_path / "checkpoints"
    config.paths.streams = tmp_path / "streams"
    config.paths.reports = tmp_path / "reports"
    return config


def completions(sampler: HierarchicalSampler, boundary) -> torch.Tensor:
    """Every configuration consistent with a fixed (μ_A, ν_A) boundary."""
    plan = sampler.plan
    L, m, l = plan.L, plan.m, plan.l
    free = (L - l) + (m - 1) * L
    idx = torch.arange(2**free)
    shifts = torch.arange(free - 1, -1, -1)
    bits = (((idx[:, None] >> shifts) & 1) * 2 - 1).to(DTYPE)
    spins = torch.zeros(2**free, m + 1, L, dtype=DTYPE)
    spins[:, 0, :l] = torch.as_tensor(boundary[:l], dtype=DTYPE)
    spins[:, m, :l] = torch.as_tensor(boundary[l:], dtype=DTYPE)
    spins[:, 0, l:] = bits[:, : L - l]
    spins[:, m, l:] = bits[:, : L - l]
    spins[:, 1:m, :] = bits[:, L - l :].reshape(-1, m - 1, L)
    return spins


@pytest.fixture
def all_completions():
    return completions
