"""Zero-temperature and continuum extrapolation of entropies.

The combined model over all (Δτ, k) points is

    y(Δτ, k) = S + a₁·Δτ² + b_Δτ·exp(-c_Δτ·k)

with shared (S, a₁) and one (b, c) pair per Δτ. Refitting with an extra
a₂·Δτ³ term gives the systematic error |S_quadratic - S_cubic|.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..interface.base_extrapolator import (
    BaseExtrapolator,
    EntropySeries,
    FitResult,
    LineFit,
    SeriesPoint,
    SingleFit,
)
from ..interface.errors import FitError

logger = logging.getLogger(__name__)

Model = Callable[[np.ndarray], np.ndarray]

LAMBDA0 = 1e-3
MAX_ITER = 200
DIAG_FLOOR = 1e-30


@dataclass
class LMResult:
    params: np.ndarray
    covariance: np.ndarray
    chi2: float
    iterations: int
    converged: bool = True  # False when damping ran away before the step tolerance was met


def numeric_jacobian(model: Model, p: np.ndarray) -> np.ndarray:
    """Central differences, one column per parameter."""
    cols = []
    for j in range(p.size):
        h = 1e-6 * max(abs(p[j]), 1.0)
        up, down = p.copy(), p.copy()
        up[j] += h
        down[j] -= h
        cols.append((model(up) - model(down)) / (2.0 * h))
    return np.stack(cols, axis=1)


def levenberg_marquardt(
    model: Model, y: np.ndarray, sigma: np.ndarray, p0: Sequence[float], max_iter: int = MAX_ITER, tol: float = 1e-14
) -> LMResult:
    """Weighted least squares; ``model(p)`` returns predictions aligned with ``y``.

    Raises
    ------
    FitError
        exitcode 0 when ``max_iter`` is reached, 1 when the damped normal
        equations cannot be solved.
    """
    y = np.asarray(y, dtype=np.float64)
    w = 1.0 / np.asarray(sigma, dtype=np.float64)  # zero for infinite errors
    p = np.asarray(p0, dtype=np.float64).copy()

    def residuals(params: np.ndarray) -> np.ndarray:
        return (y - model(params)) * w

    r = residuals(p)
    chi2 = float(r @ r)
    if not math.isfinite(chi2):
        raise FitError(1, "non-finite residuals at the initial guess")
    lam = LAMBDA0
    for iteration in range(1, max_iter + 1):
        jw = numeric_jacobian(model, p) * w[:, None]
        normal = jw.T @ jw
        grad = jw.T @ r
        damped = normal + lam * np.diag(np.maximum(np.diag(normal), DIAG_FLOOR))
        try:
            step = np.linalg.solve(damped, grad)
        except np.linalg.LinAlgError as exc:
            raise FitError(1, f"singular normal matrix: {exc}") from exc
        trial = p + step
        r_trial = residuals(trial)
        chi2_trial = float(r_trial @ r_trial)
        if math.isfinite(chi2_trial) and chi2_trial <= chi2:
            small_step = np.all(np.abs(step) <= tol * (np.abs(p) + tol)) or chi2 - chi2_trial <= tol * max(chi2, 1e-300)
            p, r, chi2 = trial, r_trial, chi2_trial
            lam = max(lam / 10.0, 1e-15)
            if small_step or chi2 < 1e-28:
                return LMResult(p, _covariance(model, p, w), chi2, iteration)
        else:
            lam *= 10.0
            if lam > 1e12:
                logger.warning("Levenberg-Marquardt stalled after %d iterations (chi2=%.6g): no downhill step at working precision", iteration, chi2)
                return LMResult(p, _covariance(model, p, w), chi2, iteration, converged=False)
    raise FitError(0, f"Levenberg-Marquardt did not converge in {max_iter} iterations (chi2={chi2:.6g})")


def _covariance(model: Model, p: np.ndarray, w: np.ndarray) -> np.ndarray:
    jw = numeric_jacobian(model, p) * w[:, None]
    normal = jw.T @ jw
    if np.linalg.matrix_rank(normal) < normal.shape[0]:
        logger.warning("normal matrix is rank deficient; parameter errors from the pseudo-inverse")
        return np.linalg.pinv(normal)
    return np.linalg.inv(normal)


def chi2_dof(y: Sequence[float], model_values: Sequence[float], sigma: Sequence[float], n_params: int) -> float:
    y, f, s = (np.asarray(v, dtype=np.float64) for v in (y, model_values, sigma))
    dof = y.size - n_params
    if dof <= 0:
        raise ValueError(f"no degrees of freedom ({y.size} points, {n_params} parameters)")
    finite = np.isfinite(s)
    return float((((y - f)[finite] / s[finite]) ** 2).sum() / dof)


def _safe_chi2_dof(y, f, s, n_params) -> float:
    try:
        return chi2_dof(y, f, s, n_params)
    except ValueError:
        return float("nan")


def initial_guess(points: Sequence[SeriesPoint]) -> Tuple[float, float, float]:
    """a from the largest k, c from a log-linear fit of successive differences, b from the smallest k."""
    ks = np.array([p.k for p in points], dtype=np.float64)
    ys = np.array([p.value for p in points])
    a0 = float(ys[-1])
    diffs = np.diff(ys)
    mids = ks[:-1]
    c0 = 1.0
    usable = np.abs(diffs) > 0
    if usable.sum() >= 2 and np.all(np.sign(diffs[usable]) == np.sign(diffs[usable][0])):
        slope = np.polyfit(mids[usable], np.log(np.abs(diffs[usable])), 1)[0]
        if math.isfinite(slope) and slope < 0:
            c0 = float(-slope)
    b0 = float((ys[0] - a0) * math.exp(c0 * ks[0]))
    return a0, b0, c0


def fit_k_single(points: Sequence[SeriesPoint]) -> SingleFit:
    points = sorted(points, key=lambda p: p.k)
    if len({p.k for p in points}) < 4:
        raise ValueError("a single-Δτ fit needs at least 4 distinct k")
    dtaus = {p.dtau for p in points}
    if len(dtaus) != 1:
        raise ValueError(f"points span several Δτ values: {sorted(dtaus)}")
    ks = np.array([p.k for p in points], dtype=np.float64)
    ys = np.array([p.value for p in points])
    sig = np.array([p.error for p in points])

    def model(q: np.ndarray) -> np.ndarray:
        return q[0] + q[1] * np.exp(-q[2] * ks)

    fit = levenberg_marquardt(model, ys, sig, initial_guess(points))
    errs = np.sqrt(np.maximum(np.diag(fit.covariance), 0.0))
    a, b, c = (float(v) for v in fit.params)
    return SingleFit(
        dtau=points[0].dtau,
        a=a,
        b=b,
        c=c,
        errors=(float(errs[0]), float(errs[1]), float(errs[2])),
        chi2_dof=_safe_chi2_dof(ys, model(fit.params), sig, 3),
        converged=fit.converged,
    )


def fit_dtau2(values: Sequence[Tuple[float, float, float]]) -> LineFit:
    """Weighted straight line through (Δτ², a_Δτ ± err); the intercept is the continuum value."""
    if len(values) < 2:
        raise ValueError("a Δτ² line needs at least two points")
    x = np.array([d**2 for d, _, _ in values])
    y = np.array([a for _, a, _ in values])
    s = np.array([e for _, _, e in values])
    design = np.stack([np.ones_like(x), x], axis=1) / s[:, None]
    normal = design.T @ design
    cov = np.linalg.pinv(normal)
    coef = cov @ design.T @ (y / s)
    return LineFit(
        intercept=float(coef[0]),
        slope=float(coef[1]),
        covariance=cov,
        chi2_dof=_safe_chi2_dof(y, coef[0] + coef[1] * x, s, 2),
    )


def combined_model(dtau: np.ndarray, k: np.ndarray, slot: np.ndarray, cubic: bool) -> Model:
    shared = 3 if cubic else 2

    def model(q: np.ndarray) -> np.ndarray:
        out = q[0] + q[1] * dtau**2
        if cubic:
            out = out + q[2] * dtau**3
        b = q[shared + 2 * slot]
        c = q[shared + 2 * slot + 1]
        return out + b * np.exp(-c * k)

    return model


@dataclass
class CombinedExtrapolator(BaseExtrapolator):
    max_iter: int = MAX_ITER
    systematics: bool = True

    def _starts(self, series: EntropySeries) -> Tuple[List[float], List[Tuple[float, float, float]]]:
        bc, avals = [], []
        for d in series.dtaus():
            pts = series.at(d)
            a, b, c = initial_guess(pts)
            a_err = pts[-1].error
            if len(pts) >= 4:
                try:
                    single = fit_k_single(pts)
                    a, b, c = single.a, single.b, single.c
                    if single.errors[0] > 0:
                        a_err = single.errors[0]
                except FitError as exc:
                    logger.debug("single fit at Δτ=%g failed (%s); using the heuristic start", d, exc)
            bc.extend([b, c])
            avals.append((d, a, a_err))
        line = fit_dtau2(avals)
        return [line.intercept, line.slope] + bc, avals

    def _fit(self, series: EntropySeries, start: Sequence[float], cubic: bool):
        dtaus = series.dtaus()
        slot_of = {d: i for i, d in enumerate(dtaus)}
        pts = series.points
        dtau = np.array([p.dtau for p in pts])
        k = np.array([p.k for p in pts], dtype=np.float64)
        slot = np.array([slot_of[p.dtau] for p in pts])
        y = np.array([p.value for p in pts])
        sig = np.array([p.error for p in pts])
        model = combined_model(dtau, k, slot, cubic)
        fit = levenberg_marquardt(model, y, sig, start, max_iter=self.max_iter)
        n_params = len(start)
        return fit, _safe_chi2_dof(y, model(fit.params), sig, n_params)

    def fit_combined(self, series: EntropySeries) -> FitResult:
        dtaus = series.dtaus()
        if len(dtaus) < 2:
            raise ValueError("combined fit needs at least two Δτ values")
        for d in dtaus:
            if len({p.k for p in series.at(d)}) < 3:
                raise ValueError(f"Δτ={d} has fewer than 3 k points")

        start, _ = self._starts(series)
        fit, chi2 = self._fit(series, start, cubic=False)
        q = fit.params
        errs = np.sqrt(np.maximum(np.diag(fit.covariance), 0.0))
        result = FitResult(
            S=float(q[0]),
            a1=float(q[1]),
            bc={d: (float(q[2 + 2 * i]), float(q[3 + 2 * i])) for i, d in enumerate(dtaus)},
            bc_err={d: (float(errs[2 + 2 * i]), float(errs[3 + 2 * i])) for i, d in enumerate(dtaus)},
            covariance=fit.covariance,
            chi2_dof=chi2,
            stat_err=float(errs[0]),
            quantity=series.quantity,
            l=series.l,
            iterations=fit.iterations,
            converged=fit.converged,
        )

        if self.systematics and len(dtaus) >= 3:
            cubic_start = [q[0], q[1], 0.0] + list(q[2:])
            try:
                cubic, _ = self._fit(series, cubic_start, cubic=True)
                result.a2 = float(cubic.params[2])
                result.S_cubic = float(cubic.params[0])
                result.sys_err = abs(result.S - result.S_cubic)
            except FitError as exc:
                logger.warning("cubic variant failed for %s l=%d (%s); systematic error set to 0", series.quantity, series.l, exc)
        elif self.systematics:
            logger.info("only %d Δτ values; cubic variant skipped", len(dtaus))
        return result


def fit_combined(series: EntropySeries) -> FitResult:
    return CombinedExtrapolator().fit_combined(series)


def synthetic_series(
    S: float,
    a1: float,
    bc: Sequence[Tuple[float, float, float]],
    ks: Sequence[int],
    sigma: float,
    rng: Optional[np.random.Generator] = None,
) -> EntropySeries:
    """Points from the combined model; ``bc`` holds (Δτ, b, c). Gaussian noise of width sigma when rng is given."""
    points = []
    for dtau, b, c in bc:
        for k in ks:
            value = S + a1 * dtau**2 + b * math.exp(-c * k)
            if rng is not None:
                value += sigma * rng.standard_normal()
            points.append(SeriesPoint(dtau=dtau, k=k, value=value, error=sigma))
    return EntropySeries(points=points)


def pull_study(
    S: float,
    a1: float,
    bc: Sequence[Tuple[float, float, float]],
    ks: Sequence[int],
    sigma: float,
    replicas: int,
    seed: int = 0,
) -> np.ndarray:
    """(Ŝ - S)/σ_Ŝ over noisy replicas of the combined model."""
    rng = np.random.default_rng(seed)
    extrapolator = CombinedExtrapolator(systematics=False)
    pulls = np.empty(replicas)
    for i in range(replicas):
        fit = extrapolator.fit_combined(synthetic_series(S, a1, bc, ks, sigma, rng))
        pulls[i] = (fit.S - S) / fit.stat_err
    return pulls
