import numpy as np
import pytest

from lazyneg.oracle import (DensityMatrix, OracleCapError, exact_entropy, exact_logneg,
                            maximally_mixed, purity, reduce_dense, variance_bound)
from lazyneg.pts import TriPartition, build_pt_operator, partition_state, random_pure_state
from conftest import bell_state, loop_partial_transpose


def werner(p: float) -> DensityMatrix:
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    return DensityMatrix(p * np.outer(psi, psi) + (1 - p) * np.eye(4) / 4, 2, 2)


def test_pure_when_c_empty():
    psi = random_pure_state(4, seed=0)
    rho = reduce_dense(psi, TriPartition((0, 1), (2, 3), ()))
    assert purity(rho) == pytest.approx(1.0)
    np.testing.assert_allclose(rho.matrix, np.outer(psi.vector, psi.vector.conj()), atol=1e-15)


def test_bell_single_qubit_reduction():
    rho = reduce_dense(bell_state(), TriPartition((0,), (1,), ())).matrix
    # trace the second qubit out by hand
    r = rho.reshape(2, 2, 2, 2)
    np.testing.assert_allclose(np.einsum("abcb->ac", r), np.eye(2) / 2, atol=1e-15)


def test_random_reduction_matches_lazy_operator():
    psi = random_pure_state(8, seed=1)
    part = TriPartition.from_sites(8, [0, 2, 4], [1, 3])
    rho = reduce_dense(psi, part)
    assert np.trace(rho.matrix).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12
    lazy = build_pt_operator(partition_state(psi, part), transpose=False).to_dense()
    np.testing.assert_allclose(rho.matrix, lazy, atol=1e-14)


def test_partial_transpose_index_formula(rng):
    psi = random_pure_state(6, seed=3)
    rho = reduce_dense(psi, TriPartition.from_sites(6, [0, 1], [2]))
    np.testing.assert_array_equal(rho.partial_transpose(),
                                  loop_partial_transpose(rho.matrix, 4, 2))


def test_bell_logneg_exact():
    assert exact_logneg(reduce_dense(bell_state(), TriPartition((0,), (1,), ()))) == \
        pytest.approx(1.0, abs=1e-12)


def test_maximally_mixed_logneg_zero():
    assert exact_logneg(maximally_mixed(4, 8)) == pytest.approx(0.0, abs=1e-12)


def test_werner_boundary():
    assert exact_logneg(werner(1 / 3)) == pytest.approx(0.0, abs=1e-10)
    # above the boundary: smallest eigenvalue of the transpose is (1 - 3p)/4
    p = 0.8
    assert exact_logneg(werner(p)) == pytest.approx(np.log2(1 + 2 * (3 * p - 1) / 4), abs=1e-12)


def test_purity_and_bound():
    rho = maximally_mixed(2, 2)
    assert purity(rho) == pytest.approx(0.25)
    assert variance_bound(rho) == pytest.approx(0.5)


def test_entropy():
    assert exact_entropy(maximally_mixed(2, 4)) == pytest.approx(3.0)
    assert exact_entropy(reduce_dense(bell_state(), TriPartition((0,), (1,), ()))) == \
        pytest.approx(0.0, abs=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(4), 2, 2)            # trace 4
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 1], [0, 0.5]]), 2, 1)
    with pytest.raises(OracleCapError):
        reduce_dense(random_pure_state(14, seed=0), TriPartition.from_sites(14, range(6), range(6, 13)))
