import math

import numpy as np
import pytest

from src.impl import estimator as nis
from src.impl import oracle
from src.impl.estimator import NISEstimator
from src.impl.lattice import index_to_state
from src.interface import BootstrapResult, DensityMatrixEstimate, MissingInputError, ModelParams, NumericalError
from src.util.weight_stream import read_weight_stream, stream_name, write_weight_stream


def test_summarize_uses_log_space_mean():
    lw = np.array([-1000.0, -1001.0, -1002.0])
    stats = nis.summarize(lw)
    expected = -1000.0 + math.log((1 + math.exp(-1) + math.exp(-2)) / 3)
    assert stats.log_mean == pytest.approx(expected, rel=1e-14)
    assert stats.n == 3
    assert 0 < stats.ess <= 1


def test_summarize_rejects_all_infinite_weights():
    with pytest.raises(NumericalError):
        nis.summarize(np.array([-np.inf, -np.inf]))


def test_low_ess_flag():
    lw = np.zeros(1000)
    lw[0] = 50.0
    assert nis.summarize(lw, ess_floor=0.01).low_ess


def test_normalize_is_shift_invariant():
    raw = np.log(np.array([[2.0, 1.0], [1.0, 2.0]]))
    rho = nis.normalize(raw)
    assert np.trace(rho) == pytest.approx(1.0)
    np.testing.assert_allclose(nis.normalize(raw + 700.0), rho, rtol=1e-14)
    np.testing.assert_allclose(rho, [[0.5, 0.25], [0.25, 0.5]])


def test_z2_partner_complements_bits():
    np.testing.assert_array_equal(nis.z2_partner(4), [3, 2, 1, 0])


def test_element_seeds_are_distinct_and_stable():
    seeds = {nis.element_seed(7, mu, nu) for mu in range(4) for nu in range(4)}
    assert len(seeds) == 16
    assert nis.element_seed(7, 1, 2) == nis.element_seed(7, 1, 2)


def _estimate(rho: np.ndarray, err: np.ndarray) -> DensityMatrixEstimate:
    params = ModelParams(L=4, k=1, l=1, dtau=0.4)
    return DensityMatrixEstimate(dim=2, raw=np.log(rho), rho=rho, err=err, params=params, n_samples=np.full((2, 2), 10))


def test_symmetrize_flags_large_asymmetry():
    rho = np.array([[0.5, 0.30], [0.20, 0.5]])
    est = nis.symmetrize(_estimate(rho, np.full((2, 2), 0.001)))
    assert est.asymmetry_flag and est.symmetrized
    np.testing.assert_allclose(est.rho, [[0.5, 0.25], [0.25, 0.5]])
    assert est.asymmetry[0, 1] == pytest.approx(0.1)


def test_symmetrize_accepts_noise_sized_asymmetry():
    rho = np.array([[0.5, 0.251], [0.249, 0.5]])
    est = nis.symmetrize(_estimate(rho, np.full((2, 2), 0.01)))
    assert not est.asymmetry_flag
    assert est.z2_deviation == pytest.approx(0.0)


def test_bootstrap_measures_the_spread_of_the_asymmetry():
    rng = np.random.default_rng(3)
    flat = nis.summarize(np.zeros(200))
    stats = [
        [flat, nis.summarize(np.log(rng.uniform(0.2, 0.3, 200)))],
        [nis.summarize(np.log(rng.uniform(0.2, 0.3, 200))), flat],
    ]
    result = nis.bootstrap(stats, replicas=400, seed=1, orders=())
    # the difference of two independent elements spreads twice as wide as their average
    ratio = result.asymmetry_err[0, 1] / result.element_err[0, 1]
    assert 1.7 < ratio < 2.3
    assert result.asymmetry_err[0, 0] == 0.0


def test_symmetrize_uses_the_bootstrap_asymmetry_spread():
    rho = np.array([[0.5, 0.2535], [0.2465, 0.5]])
    err = np.full((2, 2), 0.001)
    est = _estimate(rho, err)
    assert nis.symmetrize(est).asymmetry_flag
    est.bootstrap = BootstrapResult(
        replicas=400, element_err=err, eigenvalue_err=np.zeros(2), asymmetry_err=np.array([[0.0, 0.002], [0.002, 0.0]])
    )
    assert not nis.symmetrize(est).asymmetry_flag


def test_weight_stream_file(tmp_path):
    params = ModelParams(L=4, k=2, l=1, dtau=0.3)
    lw = np.random.default_rng(0).normal(size=257)
    path = write_weight_stream(tmp_path / stream_name(params, 1, 0), params, 1, 0, 42, lw)
    assert path.name == "L4_l1_k2_dt0.3000_J1.0000_h1.0000_mu1_nu0.wgt"
    header, values = read_weight_stream(path)
    assert header["seed"] == 42 and header["n"] == 257 and header["mu"] == 1 and header["nu"] == 0
    assert header["dtau"] == 0.3
    np.testing.assert_array_equal(values, lw)


def test_weight_stream_errors(tmp_path):
    with pytest.raises(MissingInputError):
        read_weight_stream(tmp_path / "missing.wgt")
    params = ModelParams(L=4, k=2, l=1, dtau=0.3)
    path = write_weight_stream(tmp_path / "w.wgt", params, 0, 0, 1, np.zeros(8))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(NumericalError):
        read_weight_stream(path)
    path.write_bytes(b"NOTMAGIC" + bytes(80))
    with pytest.raises(NumericalError):
        read_weight_stream(path)


def test_delta_errors_vanish_for_perfect_sampling():
    stats = [[nis.summarize(np.zeros(100)) for _ in range(2)] for _ in range(2)]
    np.testing.assert_array_equal(nis.delta_errors(stats, np.full((2, 2), 0.25)), 0.0)


@pytest.fixture
def estimate(untrained_sampler, tiny_params, tmp_path):
    estimator = NISEstimator(sampler=untrained_sampler, params=tiny_params, chunk=4096, replicas=100, stream_dir=tmp_path, jobs=2)
    return estimator, estimator.estimate_rdm(100_000, seed=11)


def test_importance_sampling_matches_enumeration(estimate, tiny_params):
    _, est = estimate
    exact = oracle.enumerate_rdm(tiny_params).rho
    assert np.trace(est.rho) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(est.rho, est.rho.T)
    assert est.bootstrap is not None and est.bootstrap.replicas == 100
    assert np.all(np.abs(est.rho - exact) <= 5 * est.err + 1e-12)
    assert np.all(np.abs(est.rho - exact) / exact < 0.05)


def test_one_stream_per_element(estimate, tmp_path):
    _, est = estimate
    assert len(list(tmp_path.glob("*.wgt"))) == est.dim**2
    assert set(est.bootstrap.entropy_err) >= {"vn", "2"}


def test_stored_streams_reproduce_the_estimate(estimate):
    estimator, est = estimate
    reloaded = estimator.load_streams(seed=11)
    np.testing.assert_array_equal(reloaded.rho, est.rho)
    np.testing.assert_array_equal(reloaded.err, est.err)


def test_equal_seeds_give_identical_estimates(untrained_sampler, tiny_params):
    estimator = NISEstimator(sampler=untrained_sampler, params=tiny_params, replicas=0)
    first = estimator.estimate_rdm(500, seed=3)
    second = estimator.estimate_rdm(500, seed=3)
    np.testing.assert_array_equal(first.raw, second.raw)
    assert first.bootstrap is None
    assert np.all(first.err >= 0)


def test_matrix_csv(estimate, tmp_path):
    _, est = estimate
    path = nis.write_matrix_csv(tmp_path / "rho.csv", est, {"config_hash": "abc"})
    first = path.read_text().splitlines()[0]
    assert first.startswith("# config_hash=abc")
    assert "asymmetry_flag=" in first
    data = nis.read_matrix_csv(path)
    np.testing.assert_array_equal(data["rho"], est.rho)
    assert data["meta"]["seed"] == "11"


def test_estimate_partition_needs_sampler(tiny_params):
    estimator = NISEstimator(sampler=None, params=tiny_params)
    with pytest.raises(ValueError):
        estimator.estimate_partition(index_to_state(0, 1), index_to_state(0, 1), 10, seed=0)
