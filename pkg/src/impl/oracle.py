"""Exact references at small sizes.

- brute-force enumeration of the classical lattice (a few tens of free spins)
- the 2^L row transfer matrix for the classical lattice at finite (m, Δτ)
- the exact ground state of the quantum chain (dense or Lanczos)
- closed-form CFT entropies of the critical chain
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import eigsh
from scipy.special import logsumexp

from ..interface.base_lattice import CouplingSet, ModelParams
from ..interface.base_oracle import BaseOracle, ClassicalRDM, QuantumRDM, QuantumSystem, TransferMatrix
from ..interface.base_spectral import VON_NEUMANN, EntropyValue, Order
from . import spectral
from .lattice import batch_energy, couplings, index_bits

logger = logging.getLogger(__name__)

B1 = 0.478558
MAX_FREE_SPINS = 26
MAX_TRANSFER_L = 10
MAX_DENSE_L = 10
MAX_SPARSE_L = 12
MAX_JACOBI_L = 6
ENUM_CHUNK = 1 << 16


def free_spin_count(params: ModelParams) -> int:
    # shared B columns of row 0 (mirrored on row m) plus all interior rows
    return (params.L - params.l) + (params.m - 1) * params.L


def enumerate_rdm(params: ModelParams, max_free: int = MAX_FREE_SPINS) -> ClassicalRDM:
    """Sums exp(-Ẽ) over every completion of every (μ_A, ν_A)."""
    free = free_spin_count(params)
    if free > max_free:
        raise ValueError(f"{free} free spins exceed the enumeration cap of {max_free}")
    c = couplings(params)
    L, l, m = params.L, params.l, params.m
    dim = 2**l
    boundary = index_bits(np.arange(dim), l).astype(np.float64)
    log_z = np.empty((dim, dim))
    for mu in range(dim):
        for nu in range(dim):
            parts = []
            for start in range(0, 2**free, ENUM_CHUNK):
                idx = np.arange(start, min(start + ENUM_CHUNK, 2**free))
                bits = index_bits(idx, free).astype(np.float64)
                spins = np.empty((bits.shape[0], m + 1, L))
                spins[:, 0, :l] = boundary[mu]
                spins[:, m, :l] = boundary[nu]
                shared = bits[:, : L - l]
                spins[:, 0, l:] = shared
                spins[:, m, l:] = shared
                spins[:, 1:m, :] = bits[:, L - l :].reshape(-1, m - 1, L)
                parts.append(logsumexp(-batch_energy(spins, c)))
            log_z[mu, nu] = logsumexp(parts)
    return _classical(params, log_z, "enumeration")


def _classical(params: ModelParams, log_z: np.ndarray, method: str) -> ClassicalRDM:
    log_Z = float(logsumexp(np.diag(log_z)))
    rho = np.exp(log_z - log_Z)
    return ClassicalRDM(params=params, rho=rho, log_z=log_z, log_Z=log_Z, method=method)


def transfer_matrix(L: int, c: CouplingSet) -> TransferMatrix:
    rows = index_bits(np.arange(2**L), L).astype(np.float64)
    horizontal = (rows * np.roll(rows, -1, axis=1)).sum(axis=1)
    return TransferMatrix(
        dim=2**L,
        step=np.exp(c.j_tau * (rows @ rows.T)),
        diag_full=np.exp(c.j_s * horizontal),
        diag_half=np.exp(0.5 * c.j_s * horizontal),
    )


def chain_matrix(params: ModelParams) -> Tuple[np.ndarray, float]:
    """M = D_half (T D_full)^(m-1) T D_half, returned as (M / scale, log scale)."""
    if params.L > MAX_TRANSFER_L:
        raise ValueError(f"transfer matrix needs L <= {MAX_TRANSFER_L}, got {params.L}")
    tm = transfer_matrix(params.L, couplings(params))
    x = tm.diag_half[:, None] * tm.step
    log_scale = 0.0
    for _ in range(params.m - 1):
        x = (x * tm.diag_full[None, :]) @ tm.step
        top = x.max()
        x /= top
        log_scale += math.log(top)
    return x * tm.diag_half[None, :], log_scale


def transfer_matrix_rdm(params: ModelParams) -> ClassicalRDM:
    L, l = params.L, params.l
    chain, log_scale = chain_matrix(params)
    blocks = chain.reshape(2**l, 2 ** (L - l), 2**l, 2 ** (L - l))
    reduced = np.einsum("abcb->ac", blocks)
    with np.errstate(divide="ignore"):
        log_z = np.log(reduced) + log_scale
    return _classical(params, log_z, "transfer-matrix")


def oracle_entropies(params: ModelParams, orders: Sequence[float] = spectral.DEFAULT_ORDERS) -> List[EntropyValue]:
    """Thermal-state entropies at β = mΔτ from the exact classical ρ_A."""
    rho = transfer_matrix_rdm(params).rho
    return spectral.entropy_table(spectral.eigh(0.5 * (rho + rho.T)), orders)


def hamiltonian(L: int, J: float, h: float, dense: bool = True):
    """H = -J Σ σᶻ_i σᶻ_{i+1 mod L} - h Σ σˣ_i in the σᶻ basis, site 0 most significant."""
    dim = 2**L
    idx = np.arange(dim)
    z = index_bits(idx, L).astype(np.float64)
    diagonal = -J * (z * np.roll(z, -1, axis=1)).sum(axis=1)
    rows, cols = [idx], [idx]
    values = [diagonal]
    for site in range(L):
        rows.append(idx)
        cols.append(idx ^ (1 << (L - 1 - site)))
        values.append(np.full(dim, -h))
    H = sparse.csr_matrix((np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    return H.toarray() if dense else H


@dataclass
class ExactChain:
    solver: str = "auto"  # auto | jacobi | dense | lanczos
    degeneracy_tol: float = 1e-8

    def _choose(self, L: int) -> str:
        if self.solver != "auto":
            return self.solver
        if L <= MAX_JACOBI_L:
            return "jacobi"
        return "dense" if L <= MAX_DENSE_L else "lanczos"

    def ground_state(self, L: int, J: float, h: float) -> QuantumSystem:
        if not 2 <= L <= MAX_SPARSE_L:
            raise ValueError(f"exact diagonalization supports 2 <= L <= {MAX_SPARSE_L}, got {L}")
        solver = self._choose(L)
        if solver == "lanczos":
            H = hamiltonian(L, J, h, dense=False)
            values, vectors = eigsh(H, k=2, which="SA", tol=1e-12)
            dense = None
        elif solver == "jacobi":
            if L > MAX_JACOBI_L:
                raise ValueError(f"Jacobi ground states are limited to L <= {MAX_JACOBI_L}")
            dense = hamiltonian(L, J, h)
            values, _, vectors = spectral.jacobi(dense, vectors=True)
        elif solver == "dense":
            dense = hamiltonian(L, J, h)
            values, vectors = np.linalg.eigh(dense)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        order = np.argsort(values)
        e0, e1 = float(values[order[0]]), float(values[order[1]])
        psi = vectors[:, order[0]]
        psi = psi / np.linalg.norm(psi)
        gap = e1 - e0
        degenerate = gap < self.degeneracy_tol * max(1.0, abs(e0))
        if degenerate:
            logger.warning("ground state of L=%d, J=%g, h=%g is degenerate (gap %.2e)", L, J, h, gap)
        return QuantumSystem(L=L, J=J, h=h, hamiltonian=dense, ground_state=psi, energy=e0, gap=gap, degenerate=degenerate)


def reduced_density_matrix(psi: np.ndarray, L: int, l: int) -> np.ndarray:
    """Tr_B |ψ⟩⟨ψ| with A the first l sites."""
    if not 1 <= l <= L:
        raise ValueError(f"subsystem length must be in [1, {L}], got {l}")
    amp = psi.reshape(2**l, 2 ** (L - l))
    return amp @ amp.T


def exact_ground_state_rdm(
    L: int, l: int, J: float = 1.0, h: float = 1.0, solver: str = "auto", orders: Sequence[float] = spectral.DEFAULT_ORDERS
) -> QuantumRDM:
    system = ExactChain(solver=solver).ground_state(L, J, h)
    rho = reduced_density_matrix(system.ground_state, L, l)
    rho = 0.5 * (rho + rho.T)
    sp = spectral.eigh(rho)
    return QuantumRDM(system=system, l=l, rho=rho, spectrum=sp, entropies=spectral.entropy_table(sp, orders))


def ground_state_energy(L: int, J: float = 1.0, h: float = 1.0, solver: str = "auto") -> float:
    return ExactChain(solver=solver).ground_state(L, J, h).energy


def _log_chord(L: int, l: int) -> float:
    if not 1 <= l <= L - 1:
        raise ValueError(f"need 1 <= l <= L-1, got l={l}, L={L}")
    return math.log(L / math.pi * math.sin(math.pi * l / L))


def cft_entropy(L: int, l: int, order: Order = VON_NEUMANN, b_n: Optional[float] = None) -> float:
    if order == VON_NEUMANN or order == 1:
        return _log_chord(L, l) / 6.0 + (B1 if b_n is None else b_n)
    if b_n is None:
        raise ValueError(f"the Rényi-{order} constant b_n is not known and must be supplied")
    n = float(order)
    return (1.0 + 1.0 / n) * _log_chord(L, l) / 12.0 + b_n


@dataclass
class BnFit:
    b_n: float
    error: float
    chi2_dof: float


def fit_bn(points: Sequence[Tuple[int, float, float]], L: int, n: Order) -> BnFit:
    """One-parameter weighted fit of the CFT offset to (l, S_n, err) points."""
    if len(points) < 2:
        raise ValueError("fit_bn needs at least two points")
    slope = 1.0 / 6.0 if (n == VON_NEUMANN or n == 1) else (1.0 + 1.0 / float(n)) / 12.0
    offsets = np.array([s - slope * _log_chord(L, l) for l, s, _ in points])
    w = 1.0 / np.array([e for _, _, e in points]) ** 2
    b = float((w * offsets).sum() / w.sum())
    chi2 = float((w * (offsets - b) ** 2).sum() / (len(points) - 1))
    return BnFit(b_n=b, error=float(1.0 / math.sqrt(w.sum())), chi2_dof=chi2)


@dataclass
class ExactOracle(BaseOracle):
    """Enumeration when the lattice is small enough, the transfer matrix otherwise."""

    max_free: int = MAX_FREE_SPINS

    def classical_rdm(self, params: ModelParams) -> ClassicalRDM:
        if free_spin_count(params) <= min(self.max_free, 16):
            return enumerate_rdm(params, self.max_free)
        return transfer_matrix_rdm(params)
