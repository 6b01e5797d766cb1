import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lazyneg.linalg import NotHermitianError, TridiagonalMatrix
from lazyneg.network import DenseOperator
from lazyneg.pts import TriPartition, build_pt_operator, partition_state, random_pure_state
from lazyneg.slq import (LanczosState, SlqConfig, SpectralFunction, bilinear_form,
                         lanczos, lanczos_estimate, lanczos_step, quadrature_value,
                         sample_rng, sample_vector, slq_trace)
from conftest import bell_state, loop_partial_transpose, random_hermitian


def dense_fn(m, f):
    lam, v = np.linalg.eigh(m)
    return (v * f(lam)) @ v.conj().T


def test_rademacher_entries():
    v = sample_vector(4, sample_rng(0, 0))
    assert set(np.unique(v)) <= {-1.0, 1.0}


def test_rademacher_mean():
    v = sample_vector(100_000, sample_rng(7, 3))
    assert abs(v.mean()) < 0.02


def test_probe_streams_reproducible_and_distinct():
    a = sample_vector(50, sample_rng(5, 2))
    b = sample_vector(50, sample_rng(5, 2))
    c = sample_vector(50, sample_rng(5, 3))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gaussian_probe():
    v = sample_vector(10_000, sample_rng(1, 1), "gaussian")
    assert abs(v.var() - 1) < 0.1
    with pytest.raises(ValueError):
        sample_vector(3, sample_rng(1, 1), "uniform")


def test_lanczos_identity_terminates():
    st_ = lanczos(DenseOperator(np.eye(5)), np.ones(5), 5)
    assert st_.k == 1 and st_.terminated
    assert st_.alpha[0] == pytest.approx(1.0)
    assert st_.beta[1] == pytest.approx(0.0, abs=1e-14)


def test_lanczos_two_by_two():
    st_ = lanczos(DenseOperator(np.diag([1.0, -1.0])), np.array([1.0, 1.0]), 2)
    assert st_.alpha == pytest.approx([0.0, 0.0], abs=1e-15)
    assert st_.beta[1] == pytest.approx(1.0)
    th = np.linalg.eigvalsh(st_.tridiagonal().to_dense())
    np.testing.assert_allclose(th, [-1, 1], atol=1e-14)


def test_lanczos_full_space_ritz_values(rng):
    m = random_hermitian(32, rng)
    st_ = lanczos(DenseOperator(m), rng.standard_normal(32), 32)
    th = np.linalg.eigvalsh(st_.tridiagonal().to_dense())
    np.testing.assert_allclose(th, np.linalg.eigvalsh(m), atol=1e-8)
    assert st_.max_orthogonality_error() < 1e-8
    assert all(b >= 0 for b in st_.beta)


def test_lanczos_step_after_termination_raises():
    state = LanczosState(np.ones(3))
    lanczos_step(DenseOperator(np.eye(3)), state)
    with pytest.raises(RuntimeError):
        lanczos_step(DenseOperator(np.eye(3)), state)


def test_quadrature_identity_single_step(rng):
    m = random_hermitian(10, rng)
    v = rng.standard_normal(10)
    state = lanczos_step(DenseOperator(m), LanczosState(v))
    q = quadrature_value(state.tridiagonal(), "identity", state.beta[0] ** 2)
    assert q == pytest.approx(np.vdot(v, m @ v).real, rel=1e-12)


def test_quadrature_square(rng):
    m = random_hermitian(20, rng)
    v = rng.standard_normal(20)
    state = lanczos(DenseOperator(m), v, 3)
    q = quadrature_value(state.tridiagonal(), "square", state.beta[0] ** 2)
    mv = m @ v
    assert q == pytest.approx(np.vdot(mv, mv).real, rel=1e-10)


def test_quadrature_bell_abs_full_space():
    psi = bell_state()
    rho = np.outer(psi.vector, psi.vector.conj())
    pt = loop_partial_transpose(rho, 2, 2)
    total = 0.0
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1
        series, _ = bilinear_form(DenseOperator(pt), e, "abs")
        total += series.converged_estimate
    assert total == pytest.approx(2.0, abs=1e-12)


def test_lanczos_estimate_constant():
    est, err = lanczos_estimate([5.0, 5.0, 5.0, 5.0])
    assert est == pytest.approx(5.0)
    assert err < 1e-12


def test_lanczos_estimate_geometric():
    est, _ = lanczos_estimate([1 - 2.0**-j for j in range(1, 12)])
    assert est == pytest.approx(1.0, abs=1e-6)


def test_lanczos_estimate_alternating():
    est, _ = lanczos_estimate([3 + (-0.5) ** j for j in range(1, 12)])
    assert est == pytest.approx(3.0, abs=1e-6)


def test_bilinear_form_psd_abs(rng):
    a = rng.standard_normal((64, 64))
    m = a @ a.T / 64
    ref = dense_fn(m, np.abs)
    for k in range(5):
        v = sample_vector(64, sample_rng(11, k))
        series, _ = bilinear_form(DenseOperator(m), v, "abs", ltol=1e-3)
        exact = v @ ref @ v
        assert abs(series.converged_estimate - exact) <= 1e-3 * abs(exact)


def test_bilinear_form_indefinite_abs(rng):
    # |x| is not smooth at 0, so on a dense indefinite spectrum the series
    # converges slowly and oscillates; per-probe accuracy is a few ltol
    m = random_hermitian(200, rng) / 20
    ref = dense_fn(m, np.abs)
    for k in range(5):
        v = sample_vector(200, sample_rng(13, k))
        series, _ = bilinear_form(DenseOperator(m), v, "abs", ltol=1e-3)
        exact = np.vdot(v, ref @ v).real
        assert abs(series.converged_estimate - exact) <= 5e-3 * abs(exact)


def test_spectral_functions():
    x = np.array([-1.0, 0.0, 0.5])
    np.testing.assert_allclose(SpectralFunction("abs")(x), [1, 0, 0.5])
    np.testing.assert_allclose(SpectralFunction("xlogx_neg")(x), [0, 0, 0.5])
    np.testing.assert_allclose(SpectralFunction("exp_neg_beta", 2.0)(x), np.exp(-2 * x))
    with pytest.raises(ValueError):
        SpectralFunction("sin")


def test_slq_identity_on_pt_operator():
    psi = random_pure_state(8, seed=4)
    op = build_pt_operator(partition_state(psi, TriPartition.from_sites(8, [0, 1, 2], [3, 4, 5])))
    est = slq_trace(op, "identity", SlqConfig(seed=2))
    assert abs(est.mean - 1) <= 3 * est.std_error


def test_slq_abs_identity_is_exact():
    est = slq_trace(np.eye(40), "abs", SlqConfig(seed=1))
    assert est.mean == pytest.approx(40.0)
    assert est.std_error < 1e-12
    assert est.converged and est.n_used == 10


def test_slq_bell_trace_norm():
    psi = bell_state()
    op = build_pt_operator(partition_state(psi, TriPartition((0,), (1,), ())))
    est = slq_trace(op, "abs", SlqConfig(seed=0))
    assert abs(est.mean - 2.0) <= 0.02 * 2


def test_slq_matches_dense_trace_of_function(rng):
    m = random_hermitian(128, rng) / 10
    exact = np.abs(np.linalg.eigvalsh(m)).sum()
    est = slq_trace(m, "abs", SlqConfig(seed=3, tol=0.005))
    assert abs(est.mean - exact) <= 3 * est.std_error + 2e-3 * exact


def test_slq_threads_do_not_change_result():
    psi = random_pure_state(10, seed=9)
    op = build_pt_operator(partition_state(psi, TriPartition.from_sites(10, [0, 1, 2], [3, 4, 5, 6])))
    a = slq_trace(op, "abs", SlqConfig(seed=5, threads=1))
    b = slq_trace(op, "abs", SlqConfig(seed=5, threads=4))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.mean == b.mean and a.std_error == b.std_error


def test_slq_stops_at_n_max():
    psi = random_pure_state(8, seed=2)
    op = build_pt_operator(partition_state(psi, TriPartition.from_sites(8, [0, 1, 2], [3, 4])))
    est = slq_trace(op, "abs", SlqConfig(tol=1e-6, n_max=15))
    assert est.n_used == 15 and not est.converged


def test_small_operator_traced_over_basis(rng):
    # a 4x4 operator with one off-diagonal pair: Rademacher samples take
    # only two values, so the basis sum is used instead
    m = np.diag([0.12, 0.35, 0.41, 0.12]).astype(complex)
    m[0, 3], m[3, 0] = -0.116 + 0.036j, -0.116 - 0.036j
    est = slq_trace(m, "abs", SlqConfig(seed=0))
    assert est.exhaustive and est.converged and est.std_error == 0.0
    assert est.mean == pytest.approx(np.abs(np.linalg.eigvalsh(m)).sum(), abs=1e-13)
    big = random_hermitian(17, rng)
    assert not slq_trace(big, "abs", SlqConfig(seed=0)).exhaustive


def test_slq_rejects_non_hermitian(rng):
    with pytest.raises(NotHermitianError):
        slq_trace(rng.standard_normal((10, 10)), "abs")


def test_slq_std_error_formula():
    psi = random_pure_state(8, seed=1)
    op = build_pt_operator(partition_state(psi, TriPartition.from_sites(8, [0, 1, 2], [3, 4, 5])))
    est = slq_trace(op, "abs", SlqConfig(seed=0))
    g = est.samples
    assert est.mean == pytest.approx(g.mean())
    assert est.std_error == pytest.approx(math.sqrt(g.var(ddof=1) / g.size))


def test_config_validation():
    with pytest.raises(ValueError):
        SlqConfig(tol=0)
    with pytest.raises(ValueError):
        SlqConfig(vector_kind="x")


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_lanczos_orthogonality_property(n, seed):
    rng = np.random.default_rng(seed)
    m = random_hermitian(n, rng)
    s = lanczos(DenseOperator(m), rng.standard_normal(n) + 1j * rng.standard_normal(n), n)
    assert s.max_orthogonality_error() < 1e-8
    t = s.tridiagonal()
    assert isinstance(t, TridiagonalMatrix) and np.all(t.beta >= 0)
