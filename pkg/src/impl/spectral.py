"""Eigen-decomposition of reduced density matrices and entropy functionals (natural logarithms)."""

import math
from typing import Iterable, List, Optional, Tuple

import numpy as np

from ..interface.base_spectral import VON_NEUMANN, EntropyValue, Spectrum

FLOOR = 1e-12
DEFAULT_ORDERS = tuple(range(2, 10))


def check_symmetric(matrix: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    asym = float(np.abs(a - a.T).max(initial=0.0))
    if asym > tol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return a


def jacobi(
    matrix: np.ndarray, tol: float = 1e-14, max_sweeps: int = 64, vectors: bool = False
) -> Tuple[np.ndarray, List[float], Optional[np.ndarray]]:
    """Cyclic Jacobi rotations.

    Returns the diagonal after convergence, the off-diagonal Frobenius norm
    measured before every sweep, and (with ``vectors``) the accumulated
    rotation whose columns are the eigenvectors.
    """
    a = check_symmetric(matrix).copy()
    n = a.shape[0]
    v = np.eye(n) if vectors else None
    norm = np.linalg.norm(a)
    history: List[float] = []
    if norm == 0.0:
        return np.zeros(n), history, v
    for _ in range(max_sweeps):
        off = math.sqrt(max(float((a**2).sum() - (np.diag(a) ** 2).sum()), 0.0))
        history.append(off)
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                if v is not None:
                    vp, vq = v[:, p].copy(), v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), history, v


def eigh(matrix: np.ndarray) -> Spectrum:
    values, _, _ = jacobi(matrix)
    return Spectrum(eigenvalues=np.sort(values)[::-1].copy())


def _significant(sp: Spectrum, floor: float) -> np.ndarray:
    lam = np.asarray(sp.eigenvalues, dtype=np.float64)
    return lam[lam > floor]


def von_neumann(sp: Spectrum, floor: float = FLOOR) -> EntropyValue:
    lam = _significant(sp, floor)
    return EntropyValue(order=VON_NEUMANN, value=float(-(lam * np.log(lam)).sum()))


def renyi(sp: Spectrum, n: float, floor: float = FLOOR) -> EntropyValue:
    if n <= 0:
        raise ValueError(f"Rényi order must be positive, got {n}")
    if n == 1:
        raise ValueError("Rényi order 1 is the von Neumann entropy; use von_neumann()")
    lam = _significant(sp, floor)
    return EntropyValue(order=float(n), value=float(np.log((lam**n).sum()) / (1.0 - n)))


def entropy_table(sp: Spectrum, orders: Iterable[float] = DEFAULT_ORDERS, floor: float = FLOOR) -> List[EntropyValue]:
    return [von_neumann(sp, floor)] + [renyi(sp, n, floor) for n in orders]
