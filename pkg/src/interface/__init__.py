from .base_lattice import BasisState, CouplingSet, ModelParams, SiteRole, SpinConfig
from .base_sampler import BaseSampler, FullSample, GroupSample, HierarchyPlan, NetSpec, SpinGroup
from .base_trainer import BaseTrainer, EpochRecord, TrainConfig, TrainReport
from .base_estimator import BaseEstimator, BootstrapResult, DensityMatrixEstimate, WeightStats
from .base_spectral import VON_NEUMANN, EntropyValue, Spectrum
from .base_extrapolator import BaseExtrapolator, EntropySeries, FitResult, LineFit, SeriesPoint, SingleFit
from .base_oracle import BaseOracle, ClassicalRDM, QuantumRDM, QuantumSystem, TransferMatrix
from .base_evaluator import BaseEvaluator, CheckResult
from .errors import (
    AcceptanceError,
    ConfigError,
    DivergenceError,
    FitError,
    HanError,
    MissingInputError,
    NumericalError,
    PlanError,
)

__all__ = [
    "BasisState",
    "CouplingSet",
    "ModelParams",
    "SiteRole",
    "SpinConfig",
    "BaseSampler",
    "FullSample",
    "GroupSample",
    "HierarchyPlan",
    "NetSpec",
    "SpinGroup",
    "BaseTrainer",
    "EpochRecord",
    "TrainConfig",
    "TrainReport",
    "BaseEstimator",
    "BootstrapResult",
    "DensityMatrixEstimate",
    "WeightStats",
    "VON_NEUMANN",
    "EntropyValue",
    "Spectrum",
    "BaseExtrapolator",
    "EntropySeries",
    "FitResult",
    "LineFit",
    "SeriesPoint",
    "SingleFit",
    "BaseOracle",
    "ClassicalRDM",
    "QuantumRDM",
    "QuantumSystem",
    "TransferMatrix",
    "BaseEvaluator",
    "CheckResult",
    "AcceptanceError",
    "ConfigError",
    "DivergenceError",
    "FitError",
    "HanError",
    "MissingInputError",
    "NumericalError",
    "PlanError",
]
