"""Quantum-to-classical mapping of the transverse-field Ising chain.

The chain of L spins at inverse temperature β = mΔτ becomes an anisotropic
classical Ising model on (m+1) rows × L columns, periodic in columns and open
in rows. Rows 0 and m carry halved horizontal couplings.
"""

import math
from typing import Tuple, Union

import numpy as np
import torch

from ..interface.base_lattice import BasisState, CouplingSet, ModelParams, SpinConfig

ArrayLike = Union[np.ndarray, torch.Tensor]


def couplings(params: ModelParams) -> CouplingSet:
    return couplings_from(params.J, params.h, params.dtau)


def couplings_from(J: float, h: float, dtau: float) -> CouplingSet:
    x_arg = dtau * h
    if x_arg <= 0:
        raise ValueError(f"dtau*h must be positive, got {x_arg}")
    x = math.exp(-2.0 * x_arg)
    j_tau = 0.5 * (math.log1p(x) - math.log1p(-x))
    return CouplingSet(j_s=dtau * J, j_tau=j_tau)


def batch_energy(spins: ArrayLike, c: CouplingSet) -> ArrayLike:
    """Ẽ for a batch of configurations of shape (..., m+1, L); works on numpy arrays and torch tensors."""
    if spins.shape[-2] < 2:
        raise ValueError("lattice needs at least two rows (m >= 1)")
    vertical = (spins[..., :-1, :] * spins[..., 1:, :]).sum(-1).sum(-1)
    # horizontal bonds per row, with the periodic wrap s[L-1]*s[0]
    horizontal = (spins[..., :, :-1] * spins[..., :, 1:]).sum(-1) + spins[..., :, -1] * spins[..., :, 0]
    bulk = horizontal[..., 1:-1].sum(-1)
    edge = horizontal[..., 0] + horizontal[..., -1]
    return -c.j_tau * vertical - c.j_s * bulk - 0.5 * c.j_s * edge


def energy(config: SpinConfig, c: CouplingSet) -> float:
    return float(batch_energy(config.spins.astype(np.float64), c))


def local_field(config: SpinConfig, site: Tuple[int, int], c: CouplingSet) -> float:
    """Field on an interior spin; flipping it changes Ẽ by 2·s·h_loc."""
    row, col = site
    s = config.spins
    if not 0 < row < config.m:
        raise ValueError(f"site {site} is on a boundary row; local field is defined for interior rows only")
    L = config.L
    vertical = int(s[row - 1, col]) + int(s[row + 1, col])
    horizontal = int(s[row, (col - 1) % L]) + int(s[row, (col + 1) % L])
    return c.j_tau * vertical + c.j_s * horizontal


def state_to_index(b: BasisState) -> int:
    return b.index


def index_to_state(i: int, l: int) -> BasisState:
    if not 0 <= i < 2**l:
        raise ValueError(f"index {i} out of range [0, {2**l}) for l={l}")
    return BasisState(tuple(1 if (i >> (l - 1 - j)) & 1 else -1 for j in range(l)))


def basis_label(i: int, l: int) -> str:
    return index_to_state(i, l).label()


def index_bits(indices: np.ndarray, width: int) -> np.ndarray:
    """±1 rows for an array of basis indices, site 0 first (most significant)."""
    shifts = np.arange(width - 1, -1, -1)
    return ((np.asarray(indices)[..., None] >> shifts) & 1).astype(np.int8) * 2 - 1


def z2_flip(config: SpinConfig) -> SpinConfig:
    return SpinConfig(spins=-config.spins, roles=config.roles)


def random_config(params: ModelParams, rng: np.random.Generator) -> SpinConfig:
    """Uniform random configuration that respects the shared μ_B = ν_B boundary."""
    spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=(params.rows, params.L))
    spins[-1, params.l:] = spins[0, params.l:]
    return SpinConfig(spins=spins)
