"""Static SVG figures. Presentation only; every plotted number is also written to CSV."""

import logging
import math
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..interface.base_extrapolator import EntropySeries, FitResult, LineFit  # noqa: E402

logging.getLogger("matplotlib").setLevel(logging.WARNING)

plt.rcParams["svg.hashsalt"] = "han-entropy"
plt.rcParams["svg.fonttype"] = "none"
SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def rho_heatmap(path: Path, rho: np.ndarray, labels: Sequence[str], title: str = "") -> Path:
    """ln ρ_A with bitstring tick labels; the largest entries sit at all-up and all-down."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    with np.errstate(divide="ignore", invalid="ignore"):
        image = ax.imshow(np.log(np.where(rho > 0, rho, np.nan)), cmap="viridis")
    ax.set_xticks(range(len(labels)))
    ax.set_yticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_yticklabels(labels, fontsize=6)
    ax.set_xlabel(r"$\nu_A$")
    ax.set_ylabel(r"$\mu_A$")
    fig.colorbar(image, ax=ax, label=r"$\ln \rho_A$")
    ax.set_title(title)
    return _save(fig, path)


def eigenvalue_plot(path: Path, eigenvalues: np.ndarray, errors: Optional[np.ndarray] = None, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    lam = np.asarray(eigenvalues)
    rank = np.arange(1, lam.size + 1)
    positive = lam > 0
    ax.errorbar(rank[positive], lam[positive], yerr=None if errors is None else np.asarray(errors)[positive], fmt="o", ms=3, capsize=2)
    ax.set_yscale("log")
    ax.set_xlabel("rank")
    ax.set_ylabel(r"$\lambda_i$")
    ax.set_title(title)
    return _save(fig, path)


def entropy_vs_k(path: Path, series: EntropySeries, fit: Optional[FitResult] = None) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for dtau in series.dtaus():
        pts = series.at(dtau)
        ks = np.array([p.k for p in pts])
        line = ax.errorbar(ks, [p.value for p in pts], yerr=[p.error for p in pts], fmt="o", ms=3, capsize=2, label=f"Δτ={dtau:g}")
        if fit is not None and dtau in fit.bc:
            b, c = fit.bc[dtau]
            grid = np.linspace(ks.min(), ks.max(), 100)
            ax.plot(grid, fit.S + fit.a1 * dtau**2 + b * np.exp(-c * grid), color=line[0].get_color(), lw=1)
    if fit is not None:
        ax.axhline(fit.S, color="k", ls=":", lw=1, label=f"S={fit.S:.4f}")
    ax.set_xlabel("k")
    ax.set_ylabel(series.quantity)
    ax.legend(fontsize=7)
    return _save(fig, path)


def a_vs_dtau2(path: Path, values: Sequence[Tuple[float, float, float]], line: Optional[LineFit] = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.array([d**2 for d, _, _ in values])
    ax.errorbar(x, [a for _, a, _ in values], yerr=[e for _, _, e in values], fmt="o", ms=3, capsize=2)
    if line is not None:
        grid = np.linspace(0.0, x.max() * 1.05, 50)
        ax.plot(grid, line.intercept + line.slope * grid, "k--", lw=1)
    ax.set_xlabel(r"$\Delta\tau^2$")
    ax.set_ylabel(r"$a_{\Delta\tau}$")
    return _save(fig, path)


def entropy_vs_l(path: Path, L: int, points: Dict[int, Tuple[float, float]], cft: Dict[int, float], exact: Optional[Dict[int, float]] = None) -> Path:
    """Extrapolated S(l) with the CFT curve dashed; ``cft`` maps l to the formula value."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ls = sorted(points)
    ax.errorbar(ls, [points[l][0] for l in ls], yerr=[points[l][1] for l in ls], fmt="o", ms=4, capsize=2, label="extrapolated")
    cl = sorted(cft)
    ax.plot(cl, [cft[l] for l in cl], "k--", lw=1, label="CFT")
    if exact:
        el = sorted(exact)
        ax.plot(el, [exact[l] for l in el], "s", mfc="none", label="exact")
    ax.set_xlabel("l")
    ax.set_ylabel("S")
    ax.set_title(f"L={L}")
    ax.legend(fontsize=7)
    return _save(fig, path)


def renyi_vs_n(path: Path, values: Dict[float, Tuple[float, float]], title: str = "") -> Path:
    """S_n against n; the von Neumann value is drawn at n = 1."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ns = sorted(values)
    ax.errorbar(ns, [values[n][0] for n in ns], yerr=[values[n][1] for n in ns], fmt="o-", ms=3, capsize=2)
    ax.set_xlabel("n")
    ax.set_ylabel(r"$S_n$")
    ax.set_title(title)
    ax.set_xlim(0.5, max(ns) + 0.5 if ns else 1.5)
    if ns and all(math.isfinite(values[n][0]) for n in ns):
        ax.set_ylim(bottom=0)
    return _save(fig, path)
