import math

import numpy as np
import pytest

from src.impl import oracle
from src.impl.oracle import ExactChain, ExactOracle
from src.interface import ModelParams


@pytest.mark.parametrize("L,k,l", [(3, 1, 1), (3, 1, 2), (3, 2, 1), (4, 1, 1), (4, 1, 3)])
def test_enumeration_matches_transfer_matrix(L, k, l):
    params = ModelParams(J=1.0, h=1.0, dtau=0.4, L=L, k=k, l=l)
    enum = oracle.enumerate_rdm(params)
    tm = oracle.transfer_matrix_rdm(params)
    np.testing.assert_allclose(enum.rho, tm.rho, rtol=1e-10)
    np.testing.assert_allclose(enum.log_z, tm.log_z, atol=1e-10)
    assert enum.method == "enumeration" and tm.method == "transfer-matrix"


def test_classical_rdm_symmetries():
    params = ModelParams(J=1.0, h=0.8, dtau=0.3, L=6, k=2, l=2)
    rho = oracle.transfer_matrix_rdm(params).rho
    assert np.trace(rho) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(rho, rho.T, rtol=1e-10)
    flip = np.arange(4)[::-1]
    np.testing.assert_allclose(rho, rho[np.ix_(flip, flip)], rtol=1e-10)
    assert np.all(np.linalg.eigvalsh(rho) > -1e-12)


def test_enumeration_cap():
    params = ModelParams(L=4, k=2, l=1, dtau=0.4)
    assert oracle.free_spin_count(params) == 3 + 7 * 4
    with pytest.raises(ValueError):
        oracle.enumerate_rdm(params)


def test_transfer_matrix_size_cap():
    with pytest.raises(ValueError):
        oracle.chain_matrix(ModelParams(L=11, k=1, l=1, dtau=0.4))


def test_exact_oracle_picks_a_method():
    assert ExactOracle().classical_rdm(ModelParams(L=3, k=1, l=1, dtau=0.4)).method == "enumeration"
    assert ExactOracle().classical_rdm(ModelParams(L=4, k=2, l=1, dtau=0.4)).method == "transfer-matrix"


def test_critical_ground_state_energy():
    # free-fermion result for the periodic critical chain: E0 = -2 / sin(π / 2L)
    for L in (4, 6):
        assert oracle.ground_state_energy(L) == pytest.approx(-2.0 / math.sin(math.pi / (2 * L)), rel=1e-10)


def test_solvers_agree():
    jacobi = ExactChain(solver="jacobi").ground_state(5, 1.0, 0.7)
    dense = ExactChain(solver="dense").ground_state(5, 1.0, 0.7)
    lanczos = ExactChain(solver="lanczos").ground_state(5, 1.0, 0.7)
    assert jacobi.energy == pytest.approx(dense.energy, rel=1e-12)
    assert lanczos.energy == pytest.approx(dense.energy, rel=1e-10)
    assert abs(float(np.dot(jacobi.ground_state, dense.ground_state))) == pytest.approx(1.0, abs=1e-8)
    assert lanczos.hamiltonian is None


def test_solver_limits():
    with pytest.raises(ValueError):
        ExactChain().ground_state(13, 1.0, 1.0)
    with pytest.raises(ValueError):
        ExactChain(solver="jacobi").ground_state(8, 1.0, 1.0)
    with pytest.raises(ValueError):
        ExactChain(solver="qr").ground_state(4, 1.0, 1.0)


def test_ground_state_rdm_properties():
    q = oracle.exact_ground_state_rdm(6, 2, orders=(2,))
    assert np.trace(q.rho) == pytest.approx(1.0, abs=1e-12)
    assert q.entropies[0].key == "vn" and q.entropies[1].key == "2"
    assert q.entropies[0].value > q.entropies[1].value > 0
    complement = oracle.exact_ground_state_rdm(6, 4, orders=())
    assert complement.entropies[0].value == pytest.approx(q.entropies[0].value, abs=1e-10)


def test_whole_chain_is_pure():
    system = ExactChain().ground_state(4, 1.0, 1.0)
    rho = oracle.reduced_density_matrix(system.ground_state, 4, 4)
    assert np.trace(rho @ rho) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        oracle.reduced_density_matrix(system.ground_state, 4, 0)


def test_hamiltonian_is_hermitian_and_sparse_form_matches():
    dense = oracle.hamiltonian(4, 1.0, 0.5)
    np.testing.assert_array_equal(dense, dense.T)
    np.testing.assert_array_equal(oracle.hamiltonian(4, 1.0, 0.5, dense=False).toarray(), dense)


def test_cft_formula():
    assert oracle.cft_entropy(32, 5) == pytest.approx(0.7401, abs=1e-4)
    assert oracle.cft_entropy(32, 5, order=2, b_n=0.3) == pytest.approx(0.75 * math.log(32 / math.pi * math.sin(5 * math.pi / 32)) / 6 + 0.3)
    with pytest.raises(ValueError):
        oracle.cft_entropy(32, 5, order=2)
    with pytest.raises(ValueError):
        oracle.cft_entropy(8, 8)


def test_fit_bn_recovers_offset():
    points = [(l, oracle.cft_entropy(16, l, b_n=0.42), 0.01) for l in range(1, 8)]
    fit = oracle.fit_bn(points, 16, "von-Neumann")
    assert fit.b_n == pytest.approx(0.42, abs=1e-12)
    assert fit.chi2_dof == pytest.approx(0.0, abs=1e-12)
    assert fit.error == pytest.approx(0.01 / math.sqrt(7))


def test_finite_temperature_entropies_grow_with_temperature():
    cold = oracle.oracle_entropies(ModelParams(L=4, k=4, l=1, dtau=0.4), orders=(2,))
    hot = oracle.oracle_entropies(ModelParams(L=4, k=1, l=1, dtau=0.1), orders=(2,))
    assert hot[0].value > cold[0].value > 0
