"""Neural importance sampling of the reduced density matrix ρ_A.

Each element Z^cl_{μ_A,ν_A} is the mean of ŵ = exp(-Ẽ - log q) over
configurations drawn with (μ_A, ν_A) held fixed. All elements share one
trained hierarchy, and ρ_A is the matrix of mean weights divided by its trace.
"""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from scipy.special import logsumexp

from ..interface.base_estimator import BaseEstimator, BootstrapResult, DensityMatrixEstimate, WeightStats
from ..interface.base_lattice import BasisState, ModelParams
from ..interface.errors import NumericalError
from ..util import report
from ..util.weight_stream import read_weight_stream, stream_name, write_weight_stream
from . import spectral
from .autoreg import DTYPE
from .han import HierarchicalSampler
from .lattice import basis_label, index_to_state
from .training import ess, log_weights

logger = logging.getLogger(__name__)

ASYMMETRY_SIGMAS = 4.0
DEFAULT_REPLICAS = 800


def element_seed(seed: int, mu: int, nu: int) -> int:
    """Independent stream per matrix element, stable under any scheduling order."""
    return int(np.random.SeedSequence([seed, mu, nu]).generate_state(1)[0])


def summarize(lw: np.ndarray, mu: int = 0, nu: int = 0, seed: int = 0, ess_floor: float = 0.0) -> WeightStats:
    lw = np.asarray(lw, dtype=np.float64).ravel()
    if lw.size == 0 or not np.isfinite(lw).any():
        raise NumericalError(f"element ({mu}, {nu}) has no finite importance weight")
    log_mean = float(logsumexp(lw) - math.log(lw.size))
    value = ess(lw)
    return WeightStats(
        log_weights=lw, n=lw.size, log_mean=log_mean, ess=value, mu=mu, nu=nu, seed=seed, low_ess=value < ess_floor
    )


def normalize(raw: np.ndarray) -> np.ndarray:
    """Mean weights from their logs, divided by the trace; a common shift of all logs cancels."""
    raw = np.asarray(raw, dtype=np.float64)
    w = np.exp(raw - raw.max())
    return w / np.trace(w)


def symmetrized(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.T)


def z2_partner(dim: int) -> np.ndarray:
    # flipping every spin complements the bitstring
    return (dim - 1) - np.arange(dim)


def _in_sigmas(diff: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sigma > 0, diff / np.where(sigma > 0, sigma, 1.0), np.where(diff > 1e-15, np.inf, 0.0))
    return out


def symmetrize(est: DensityMatrixEstimate) -> DensityMatrixEstimate:
    """(ρ + ρᵀ)/2, recording the asymmetry it removed and the Z₂ deviation it leaves alone."""
    rho, err = est.rho, est.err
    asym = np.abs(rho - rho.T)
    if est.bootstrap is not None and est.bootstrap.asymmetry_err is not None:
        sigma = est.bootstrap.asymmetry_err
    else:
        sigma = np.sqrt(err**2 + err.T**2)
    flag = bool((_in_sigmas(asym, sigma) > ASYMMETRY_SIGMAS).any())
    if flag:
        logger.warning("%s: ρ_A asymmetry exceeds %g σ before symmetrization", est.params.tag(), ASYMMETRY_SIGMAS)
    sym = symmetrized(rho)
    flip = z2_partner(est.dim)
    flipped = sym[np.ix_(flip, flip)]
    z2 = _in_sigmas(np.abs(sym - flipped), np.sqrt(err**2 + err[np.ix_(flip, flip)] ** 2))
    return dataclasses.replace(
        est, rho=sym, asymmetry=asym, asymmetry_flag=flag, z2_deviation=float(z2.max()), symmetrized=True
    )


def bootstrap(
    stats: Sequence[Sequence[WeightStats]],
    replicas: int = DEFAULT_REPLICAS,
    seed: int = 0,
    orders: Sequence[float] = spectral.DEFAULT_ORDERS,
) -> BootstrapResult:
    """Resample every element's weights B times and push each replica through the whole chain."""
    dim = len(stats)
    rng = np.random.default_rng(np.random.SeedSequence([seed, dim, replicas]))
    rhos = np.empty((replicas, dim, dim))
    skews = np.empty((replicas, dim, dim))
    eigs = np.empty((replicas, dim))
    traces = np.empty(replicas)
    entropies: Dict[str, List[float]] = {}
    for b in range(replicas):
        raw = np.empty((dim, dim))
        for i in range(dim):
            for j in range(dim):
                lw = stats[i][j].log_weights
                pick = rng.integers(0, lw.size, lw.size)
                raw[i, j] = logsumexp(lw[pick]) - math.log(lw.size)
        unsym = normalize(raw)
        skews[b] = unsym - unsym.T
        rho = symmetrized(unsym)
        rhos[b], traces[b] = rho, np.trace(rho)
        sp = spectral.eigh(rho)
        eigs[b] = sp.eigenvalues
        for value in spectral.entropy_table(sp, orders):
            entropies.setdefault(value.key, []).append(value.value)

    ddof = 1 if replicas > 1 else 0
    return BootstrapResult(
        replicas=replicas,
        element_err=rhos.std(axis=0, ddof=ddof),
        eigenvalue_err=eigs.std(axis=0, ddof=ddof),
        entropy_err={key: float(np.std(values, ddof=ddof)) for key, values in entropies.items()},
        trace_err=float(traces.std(ddof=ddof)),
        asymmetry_err=skews.std(axis=0, ddof=ddof),
    )


def delta_errors(stats: Sequence[Sequence[WeightStats]], rho: np.ndarray) -> np.ndarray:
    # relative variance of a mean weight is (1/ESS - 1)/N
    rel = np.array([[math.sqrt(max(1.0 / s.ess - 1.0, 0.0) / s.n) for s in row] for row in stats])
    return rho * rel


@dataclass
class NISEstimator(BaseEstimator):
    """Per-element importance sampling with one shared sampler; without a sampler only stored streams can be analysed."""

    sampler: Optional[HierarchicalSampler]
    params: ModelParams
    chunk: int = 65536
    ess_floor: float = 1e-4
    jobs: int = 1
    replicas: int = DEFAULT_REPLICAS
    stream_dir: Optional[Path] = None
    checkpoint_id: Optional[str] = None

    @property
    def dim(self) -> int:
        return 2**self.params.l

    def estimate_partition(self, mu: BasisState, nu: BasisState, n_samples: int, seed: int) -> WeightStats:
        if self.sampler is None:
            raise ValueError("estimate_partition needs a trained sampler")
        if n_samples < 1:
            raise ValueError(f"need at least one sample, got {n_samples}")
        generator = torch.Generator().manual_seed(seed)
        fixed = torch.tensor(list(mu.bits) + list(nu.bits), dtype=DTYPE)
        parts = []
        with torch.no_grad():
            for start in range(0, n_samples, self.chunk):
                n = min(self.chunk, n_samples - start)
                sample = self.sampler.sample_configuration(fixed.expand(n, -1).clone(), generator)
                parts.append(log_weights(sample, self.sampler.c).numpy())
        stats = summarize(np.concatenate(parts), mu=mu.index, nu=nu.index, seed=seed, ess_floor=self.ess_floor)
        if stats.low_ess:
            logger.warning("%s (%s, %s): ESS %.2e below floor %.2e", self.params.tag(), mu.label(), nu.label(), stats.ess, self.ess_floor)
        if self.stream_dir is not None:
            write_weight_stream(Path(self.stream_dir) / stream_name(self.params, mu.index, nu.index), self.params, mu.index, nu.index, seed, stats.log_weights)
        return stats

    def _element(self, mu: int, nu: int, n_samples: int, seed: int) -> WeightStats:
        l = self.params.l
        return self.estimate_partition(index_to_state(mu, l), index_to_state(nu, l), n_samples, element_seed(seed, mu, nu))

    def estimate_rdm(self, n_samples: Union[int, np.ndarray], seed: int) -> DensityMatrixEstimate:
        dim = self.dim
        counts = np.broadcast_to(np.asarray(n_samples, dtype=np.int64), (dim, dim))
        pairs = [(mu, nu) for mu in range(dim) for nu in range(dim)]
        with ThreadPoolExecutor(max_workers=max(1, self.jobs)) as executor:
            flat = list(executor.map(lambda p: self._element(p[0], p[1], int(counts[p]), seed), pairs))
        stats = [flat[i * dim : (i + 1) * dim] for i in range(dim)]
        return self.assemble(stats, seed)

    def assemble(self, stats: List[List[WeightStats]], seed: int) -> DensityMatrixEstimate:
        dim = len(stats)
        raw = np.array([[s.log_mean for s in row] for row in stats])
        rho = normalize(raw)
        boot = bootstrap(stats, self.replicas, seed=seed) if self.replicas > 0 else None
        err = boot.element_err if boot is not None else delta_errors(stats, rho)
        est = DensityMatrixEstimate(
            dim=dim,
            raw=raw,
            rho=rho,
            err=err,
            params=self.params,
            n_samples=np.array([[s.n for s in row] for row in stats]),
            seed=seed,
            checkpoint_id=self.checkpoint_id,
            ess=np.array([[s.ess for s in row] for row in stats]),
            bootstrap=boot,
            stats=stats,
        )
        return symmetrize(est)

    def load_streams(self, seed: int) -> DensityMatrixEstimate:
        """Rebuild an estimate from the weight streams on disk without resampling."""
        if self.stream_dir is None:
            raise ValueError("no stream directory configured")
        stats = []
        for mu in range(self.dim):
            row = []
            for nu in range(self.dim):
                header, lw = read_weight_stream(Path(self.stream_dir) / stream_name(self.params, mu, nu))
                row.append(summarize(lw, mu=mu, nu=nu, seed=header["seed"], ess_floor=self.ess_floor))
            stats.append(row)
        return self.assemble(stats, seed)


MATRIX_COLUMNS = ["mu", "nu", "rho", "err", "log_mean", "n", "ess"]


def write_matrix_csv(path: Path, est: DensityMatrixEstimate, meta: Dict[str, object]) -> Path:
    l = est.params.l
    rows = []
    for mu in range(est.dim):
        for nu in range(est.dim):
            rows.append(
                [
                    basis_label(mu, l),
                    basis_label(nu, l),
                    float(est.rho[mu, nu]),
                    float(est.err[mu, nu]),
                    float(est.raw[mu, nu]),
                    int(est.n_samples[mu, nu]) if est.n_samples is not None else "",
                    float(est.ess[mu, nu]) if est.ess is not None else "",
                ]
            )
    meta = {**meta, "checkpoint_id": est.checkpoint_id, "seed": est.seed, "asymmetry_flag": est.asymmetry_flag}
    return report.write_csv(path, MATRIX_COLUMNS, rows, meta)


def read_matrix_csv(path: Path) -> Dict[str, np.ndarray]:
    meta, rows = report.read_csv(path)
    labels = sorted({r["mu"] for r in rows})
    dim = len(labels)
    rho, err = np.zeros((dim, dim)), np.zeros((dim, dim))
    for r in rows:
        i, j = int(r["mu"], 2), int(r["nu"], 2)
        rho[i, j], err[i, j] = float(r["rho"]), float(r["err"])
    return {"rho": rho, "err": err, "meta": meta}
