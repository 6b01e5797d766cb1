import math

import numpy as np
import pytest

from lazyneg.oracle import exact_logneg, purity, reduce_dense, renyi_half_entropy
from lazyneg.pts import (PureState, TriPartition, analytic_random_logneg, build_pt_operator,
                         logneg_pts, partition_state, random_pure_state)
from lazyneg.slq import SlqConfig
from conftest import bell_state, loop_partial_transpose, product_state


def test_partition_identity_order(rng):
    psi = random_pure_state(3, seed=0)
    t = partition_state(psi, TriPartition((0,), (1,), (2,)))
    np.testing.assert_array_equal(t.data, psi.tensor)


def test_partition_non_contiguous():
    psi = random_pure_state(4, seed=1)
    t = partition_state(psi, TriPartition((0, 2), (1,), (3,))).data
    assert t.shape == (4, 2, 2)
    for s0 in range(2):
        for s1 in range(2):
            for s2 in range(2):
                for s3 in range(2):
                    assert t[2 * s0 + s2, s1, s3] == psi.tensor[s0, s1, s2, s3]
    assert np.linalg.norm(t) == pytest.approx(1.0)


def test_partition_validation():
    with pytest.raises(ValueError):
        TriPartition((0,), (0,), (1,))
    with pytest.raises(ValueError):
        TriPartition((0,), (2,), ())
    with pytest.raises(ValueError):
        TriPartition((), (0,), (1,))


def test_bell_operator_dense():
    psi = bell_state()
    op = build_pt_operator(partition_state(psi, TriPartition((0,), (1,), ())))
    rho = np.outer(psi.vector, psi.vector.conj())
    np.testing.assert_allclose(op.to_dense(), loop_partial_transpose(rho, 2, 2), atol=1e-15)


def test_product_state_operator_rank_one():
    psi = product_state(5)
    op = build_pt_operator(partition_state(psi, TriPartition.from_sites(5, [0, 3], [1])))
    lam = np.linalg.eigvalsh(op.to_dense())
    np.testing.assert_allclose(np.sort(lam)[::-1], [1] + [0] * (lam.size - 1), atol=1e-14)


def test_random_operator_vs_brute_force():
    psi = random_pure_state(10, seed=5)
    part = TriPartition.from_sites(10, [0, 4, 7], [1, 2, 9])
    dense = build_pt_operator(partition_state(psi, part)).to_dense()
    rho = reduce_dense(psi, part)
    np.testing.assert_allclose(dense, dense.conj().T, atol=1e-12)
    assert np.trace(dense).real == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(dense, loop_partial_transpose(rho.matrix, 8, 8), atol=1e-12)


def test_untransposed_operator_is_rho():
    psi = random_pure_state(6, seed=8)
    part = TriPartition.from_sites(6, [0, 1], [2, 3])
    dense = build_pt_operator(partition_state(psi, part), transpose=False).to_dense()
    np.testing.assert_allclose(dense, reduce_dense(psi, part).matrix, atol=1e-14)


def test_bell_logneg():
    cfg = SlqConfig(seed=0)
    E, err = logneg_pts(bell_state(), TriPartition((0,), (1,), ()), cfg)
    assert abs(E - 1.0) <= cfg.tol / math.log(2)


def test_product_state_logneg_zero():
    neg = logneg_pts(product_state(6), TriPartition.from_sites(6, [0, 1], [2, 3]))
    assert neg.E < 1e-12


def test_random_l12_closed_form_and_oracle():
    psi = random_pure_state(12, seed=21)
    part = TriPartition.from_sites(12, range(4), range(4, 8))
    neg = logneg_pts(psi, part, SlqConfig(seed=4))
    exact = exact_logneg(reduce_dense(psi, part))
    assert analytic_random_logneg(16, 16, 16) == pytest.approx(1.80, abs=0.005)
    assert abs(neg.E - exact) <= 3 * neg.err
    assert abs(exact - 1.80) < 0.1


def test_symmetry_in_a_and_b():
    psi = random_pure_state(9, seed=2)
    part = TriPartition.from_sites(9, [0, 1, 5], [2, 3])
    e1 = exact_logneg(reduce_dense(psi, part))
    e2 = exact_logneg(reduce_dense(psi, part.swapped()))
    assert e1 == pytest.approx(e2, abs=1e-10)
    n1 = logneg_pts(psi, part, SlqConfig(seed=1))
    n2 = logneg_pts(psi, part.swapped(), SlqConfig(seed=2))
    assert abs(n1.E - n2.E) <= 3 * math.hypot(n1.err, n2.err)


def test_pure_limit_is_renyi_half():
    psi = random_pure_state(8, seed=3)
    part = TriPartition.from_sites(8, range(3), range(3, 8))
    assert exact_logneg(reduce_dense(psi, part)) == pytest.approx(
        renyi_half_entropy(psi, range(3)), abs=1e-8)


def test_random_state_norm_and_seed():
    a = random_pure_state(7, seed=4)
    b = random_pure_state(7, seed=4)
    assert a.norm() == pytest.approx(1.0)
    np.testing.assert_array_equal(a.vector, b.vector)


def test_random_state_mean_purity():
    vals = []
    for s in range(20):
        psi = random_pure_state(10, seed=100 + s)
        vals.append(purity(reduce_dense(psi, TriPartition.from_sites(10, range(5), range(5, 10)))))
    # A|B here is the whole chain, so rho_AB is pure; check the half-chain reduction instead
    assert np.mean(vals) == pytest.approx(1.0)
    half = []
    for s in range(20):
        psi = random_pure_state(10, seed=100 + s)
        m = psi.tensor.reshape(32, 32)
        r = m @ m.conj().T
        half.append(np.vdot(r, r).real)
    d_a = d_b = 32
    assert np.mean(half) == pytest.approx((d_a + d_b) / (d_a * d_b + 1), rel=0.1)


def test_analytic_boundaries():
    # R = 2 sqrt(d_a d_b / d_c) = 1 exactly
    assert analytic_random_logneg(1, 1, 4) == 0.0
    assert analytic_random_logneg(2, 2, 1024) == 0.0
    assert analytic_random_logneg(16, 16, 16) == pytest.approx(1.7969212839, abs=1e-9)
    with pytest.raises(ValueError):
        analytic_random_logneg(0, 1, 1)


def test_pure_state_validation():
    with pytest.raises(ValueError):
        PureState.from_vector(np.ones(6), 3)
