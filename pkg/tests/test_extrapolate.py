import math

import numpy as np
import pytest

from src.impl import extrapolate
from src.impl.extrapolate import CombinedExtrapolator
from src.interface import EntropySeries, FitError, SeriesPoint
from src.interface.base_extrapolator import FIT_COLUMNS

GRID = [(0.4, -0.33, 1.2), (0.3, -0.31, 1.1), (0.2, -0.29, 1.0)]


def test_levenberg_marquardt_recovers_exponential():
    k = np.arange(2, 10, dtype=float)
    y = 0.7 - 0.4 * np.exp(-0.9 * k)
    fit = extrapolate.levenberg_marquardt(lambda q: q[0] + q[1] * np.exp(-q[2] * k), y, np.full(k.size, 1e-4), [0.5, -1.0, 0.5])
    np.testing.assert_allclose(fit.params, [0.7, -0.4, 0.9], atol=1e-8)
    assert fit.covariance.shape == (3, 3)


def test_levenberg_marquardt_iteration_limit():
    k = np.arange(2, 10, dtype=float)
    y = 0.7 - 0.4 * np.exp(-0.9 * k)
    with pytest.raises(FitError) as info:
        extrapolate.levenberg_marquardt(lambda q: q[0] + q[1] * np.exp(-q[2] * k), y, np.full(k.size, 1e-4), [0.0, 5.0, 0.1], max_iter=1)
    assert info.value.exitcode == 0


def test_infinite_sigma_removes_a_point():
    x = np.arange(5, dtype=float)
    y = 2.0 + 0.5 * x
    y[4] = 100.0
    sigma = np.array([0.1, 0.1, 0.1, 0.1, np.inf])
    fit = extrapolate.levenberg_marquardt(lambda q: q[0] + q[1] * x, y, sigma, [0.0, 0.0])
    np.testing.assert_allclose(fit.params, [2.0, 0.5], atol=1e-8)


def test_chi2_dof():
    assert extrapolate.chi2_dof([1.0, 2.0, 3.0], [1.0, 2.0, 4.0], [1.0, 1.0, 0.5], 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        extrapolate.chi2_dof([1.0, 2.0], [1.0, 2.0], [1.0, 1.0], 2)


def test_single_fit_at_one_dtau():
    series = extrapolate.synthetic_series(0.5, -0.3, [(0.3, -0.4, 0.8)], range(2, 9), 1e-6)
    single = extrapolate.fit_k_single(series.at(0.3))
    assert single.a == pytest.approx(0.5 - 0.3 * 0.09, abs=1e-8)
    assert single.c == pytest.approx(0.8, abs=1e-6)
    with pytest.raises(ValueError):
        extrapolate.fit_k_single(series.at(0.3)[:3])


def test_single_fit_of_constant_data():
    points = [SeriesPoint(dtau=0.3, k=k, value=0.6, error=1e-3) for k in range(2, 8)]
    single = extrapolate.fit_k_single(points)
    assert single.a == pytest.approx(0.6, abs=1e-12)
    assert single.b == pytest.approx(0.0, abs=1e-12)
    assert single.converged


def test_single_fit_under_a_shift_of_k():
    series = extrapolate.synthetic_series(0.5, -0.3, [(0.3, -0.4, 0.8)], range(2, 9), 1e-6)
    shift = 3
    shifted = [SeriesPoint(p.dtau, p.k + shift, p.value, p.error) for p in series.at(0.3)]
    base, moved = extrapolate.fit_k_single(series.at(0.3)), extrapolate.fit_k_single(shifted)
    assert moved.a == pytest.approx(base.a, abs=1e-8)
    assert moved.c == pytest.approx(base.c, abs=1e-6)
    assert moved.b == pytest.approx(base.b * math.exp(base.c * shift), rel=1e-5)


def test_stalled_fit_is_flagged_unconverged(monkeypatch, caplog):
    exact = extrapolate.numeric_jacobian
    # a Jacobian of the wrong sign makes every damped step uphill
    monkeypatch.setattr(extrapolate, "numeric_jacobian", lambda model, p: -exact(model, p))
    y = np.array([1.0, 2.0, 3.0])
    fit = extrapolate.levenberg_marquardt(lambda q: np.full(3, q[0]), y, np.ones(3), [0.0])
    assert not fit.converged
    assert fit.params[0] == 0.0
    assert "stalled" in caplog.text


def test_dtau2_line():
    values = [(d, 0.5 + 0.2 * d**2, 1e-3) for d in (0.4, 0.3, 0.2)]
    line = extrapolate.fit_dtau2(values)
    assert line.intercept == pytest.approx(0.5, abs=1e-12)
    assert line.slope == pytest.approx(0.2, abs=1e-10)
    assert line.intercept_err > 0


def test_combined_fit_recovers_noiseless_data():
    fit = CombinedExtrapolator().fit_combined(extrapolate.synthetic_series(0.55, -0.3, GRID, range(2, 9), 1e-4))
    assert fit.S == pytest.approx(0.55, abs=1e-8)
    assert fit.a1 == pytest.approx(-0.3, abs=1e-7)
    for dtau, b, c in GRID:
        assert fit.bc[dtau][0] == pytest.approx(b, abs=1e-6)
        assert fit.bc[dtau][1] == pytest.approx(c, abs=1e-6)
    assert fit.S_cubic is not None and fit.sys_err == pytest.approx(0.0, abs=1e-7)
    assert fit.total_err == pytest.approx(math.hypot(fit.stat_err, fit.sys_err))


def test_two_dtaus_skip_the_cubic_variant():
    fit = extrapolate.fit_combined(extrapolate.synthetic_series(0.55, -0.3, GRID[:2], range(2, 9), 1e-4))
    assert fit.S_cubic is None and fit.sys_err == 0.0


def test_combined_fit_needs_two_dtaus_and_three_ks():
    with pytest.raises(ValueError):
        extrapolate.fit_combined(extrapolate.synthetic_series(0.5, 0.0, GRID[:1], range(2, 9), 1e-3))
    with pytest.raises(ValueError):
        extrapolate.fit_combined(extrapolate.synthetic_series(0.5, 0.0, GRID, [2, 3], 1e-3))


def test_pull_distribution_is_roughly_standard():
    pulls = extrapolate.pull_study(0.55, -0.3, GRID, range(2, 9), 1e-3, replicas=60, seed=1)
    assert abs(pulls.mean()) < 0.5
    assert 0.6 < pulls.std(ddof=1) < 1.4


def test_fit_row_matches_columns():
    fit = extrapolate.fit_combined(extrapolate.synthetic_series(0.55, -0.3, GRID, range(2, 9), 1e-4))
    row = fit.to_row()
    assert len(row) == len(FIT_COLUMNS)
    assert row[-2].startswith("dt=0.2:")
    assert FIT_COLUMNS[-1] == "converged" and row[-1]


def test_series_validation():
    with pytest.raises(ValueError):
        EntropySeries([SeriesPoint(0.2, 2, 0.5, 0.0)])
    with pytest.raises(ValueError):
        EntropySeries([SeriesPoint(0.2, 2, 0.5, 0.1), SeriesPoint(0.2, 2, 0.6, 0.1)])
    series = EntropySeries([SeriesPoint(0.2, 3, 0.5, 0.1), SeriesPoint(0.4, 2, 0.6, 0.1), SeriesPoint(0.2, 2, 0.7, 0.1)])
    assert series.dtaus() == [0.4, 0.2]
    assert [p.k for p in series.at(0.2)] == [2, 3]


@pytest.mark.slow
def test_pull_study_at_full_size():
    pulls = extrapolate.pull_study(0.55, -0.3, GRID, range(2, 9), 1e-3, replicas=500, seed=0)
    assert abs(pulls.mean()) <= 0.1
    assert 0.85 <= pulls.std(ddof=1) <= 1.15
