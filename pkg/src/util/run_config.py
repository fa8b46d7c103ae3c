"""Run configuration: TOML file, environment defaults and CLI overrides.

Precedence is CLI flag > environment variable > config file > model default.
"""

import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from ..interface.base_lattice import ModelParams
from ..interface.base_trainer import TrainConfig
from ..interface.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_KEYS = {
    "HAN_SEED": ("run", "seed", int),
    "HAN_JOBS": ("run", "jobs", int),
    "HAN_LOG_LEVEL": ("run", "log_level", str),
    "HAN_TORCH_THREADS": ("run", "torch_threads", int),
}

# run settings that change scheduling or verbosity but never the numbers; [paths] is left out as well
UNHASHED_RUN_KEYS = {"jobs", "log_level", "torch_threads"}


def _non_empty(values: List) -> List:
    if not values:
        raise ValueError("grid must not be empty")
    return values


class ModelSection(BaseModel):
    J: float = Field(1.0, gt=0)
    h: float = Field(1.0, gt=0)
    L: int = Field(8, ge=2)
    l_values: List[int] = Field(default_factory=lambda: [1])
    dtaus: List[float] = Field(default_factory=lambda: [0.4, 0.3, 0.2])
    ks: List[int] = Field(default_factory=lambda: list(range(2, 9)))

    @field_validator("l_values", "dtaus", "ks")
    @classmethod
    def _check_grids(cls, values: List) -> List:
        return _non_empty(values)


class EstimatorSection(BaseModel):
    n_samples: int = Field(100_000, ge=1)
    bootstrap: int = Field(800, ge=0)
    chunk: int = Field(65536, ge=1)
    ess_floor: float = Field(1e-4, ge=0)
    orders: List[float] = Field(default_factory=lambda: [float(n) for n in range(2, 10)])


class PathsSection(BaseModel):
    checkpoints: Path = Path("runs/checkpoints")
    streams: Path = Path("runs/streams")
    reports: Path = Path("runs/reports")


class RunSection(BaseModel):
    seed: int = 0
    jobs: int = Field(1, ge=1)
    log_level: str = "INFO"
    torch_threads: Optional[int] = Field(None, ge=1)


class RunConfig(BaseModel):
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    estimator: EstimatorSection = Field(default_factory=EstimatorSection)
    paths: PathsSection = Field(default_factory=PathsSection)
    run: RunSection = Field(default_factory=RunSection)

    def grid(self) -> List[ModelParams]:
        m = self.model
        try:
            return [
                ModelParams(J=m.J, h=m.h, dtau=dtau, L=m.L, k=k, l=l)
                for l in m.l_values
                for dtau in m.dtaus
                for k in m.ks
            ]
        except ValidationError as exc:
            raise ConfigError(f"invalid model grid: {exc}") from exc

    def config_hash(self) -> str:
        data = self.model_dump(mode="json", exclude={"paths"})
        for key in UNHASHED_RUN_KEYS:
            data["run"].pop(key, None)
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def point_seed(self, params: ModelParams) -> int:
        entropy = [self.run.seed, params.L, params.l, params.k, int(round(params.dtau * 1_000_000))]
        return int(np.random.SeedSequence(entropy).generate_state(1)[0])

    def train_config(self, params: ModelParams) -> TrainConfig:
        return self.train.model_copy(update={"seed": self.point_seed(params)})

    def checkpoint_path(self, params: ModelParams) -> Path:
        return self.paths.checkpoints / f"{params.tag()}.ckpt"

    def stream_dir(self, params: ModelParams) -> Path:
        return self.paths.streams / params.tag()

    def prepare(self) -> None:
        for path in (self.paths.checkpoints, self.paths.streams, self.paths.reports):
            try:
                path.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError(f"cannot create {path}: {exc}") from exc


def _merge(base: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def read_toml(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def env_overrides() -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for name, (section, key, cast) in ENV_KEYS.items():
        raw = os.environ.get(name)
        if raw is None or raw == "":
            continue
        try:
            out.setdefault(section, {})[key] = cast(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}={raw!r} is not a valid {cast.__name__}") from exc
    return out


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    load_dotenv()
    path = path or os.environ.get("HAN_CONFIG")
    data: Dict[str, Any] = read_toml(Path(path)) if path else {}
    data = _merge(data, env_overrides())
    data = _merge(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
