import itertools
import math

import numpy as np
import pytest

from lazyneg.network import (NetworkError, TensorNetwork, TnOperator, _pair_result,
                             plan_path)
from lazyneg.pts import build_pt_operator, partition_state, random_pure_state, TriPartition
from lazyneg.tensor import Tensor
from conftest import bell_state, loop_partial_transpose


def _all_peaks(shapes):
    """Smallest achievable peak intermediate over every pairwise order."""
    best = math.inf

    def rec(nodes, peak):
        nonlocal best
        if len(nodes) == 1:
            best = min(best, peak)
            return
        for i, j in itertools.combinations(range(len(nodes)), 2):
            res = _pair_result(nodes[i], nodes[j])
            rest = [n for k, n in enumerate(nodes) if k not in (i, j)]
            rec(rest + [res], max(peak, math.prod(res.values())))

    rec(list(shapes), 0)
    return best


def test_matrix_chain_contracts_probe_first():
    shapes = [{"i": 2, "j": 100}, {"j": 100, "k": 2}, {"k": 2, "l": 100}, {"l": 100}]
    path = plan_path(shapes)
    assert path.steps[0] == (2, 3)
    assert path.peak_size == _all_peaks(shapes)
    assert path.peak_size < 100 * 100


def test_single_tensor_with_probe_is_one_step():
    path = plan_path([{"i": 3, "j": 4}, {"j": 4}])
    assert len(path.steps) == 1


def test_pts_network_peak():
    d = 4
    shapes = [{"a": d, "bp": d, "c": d}, {"ap": d, "b": d, "c": d}, {"ap": d, "bp": d}]
    path = plan_path(shapes)
    assert path.peak_size == d * d * d
    assert path.peak_size == _all_peaks(shapes)


def test_label_used_three_times_rejected():
    t = Tensor(np.ones(2), ("i",))
    with pytest.raises(NetworkError):
        TensorNetwork([t, t, t])


def test_inconsistent_dims_rejected():
    with pytest.raises(NetworkError):
        TensorNetwork([Tensor(np.ones(2), ("i",)), Tensor(np.ones(3), ("i",))])


def test_identity_network(rng):
    op = TnOperator([Tensor(np.eye(3), ("x", "m")), Tensor(np.eye(3), ("m", "y"))], ("x",), ("y",))
    v = rng.standard_normal(3)
    np.testing.assert_allclose(op.matvec(v), v)
    np.testing.assert_allclose(op.to_dense(), np.eye(3))


def test_bell_column_zero():
    psi = bell_state()
    op = build_pt_operator(partition_state(psi, TriPartition((0,), (1,), ())))
    out = op.matvec(np.array([1.0, 0, 0, 0]))
    np.testing.assert_allclose(out, [0.5, 0, 0, 0], atol=1e-15)
    out = op.matvec(np.array([0, 1.0, 0, 0]))
    np.testing.assert_allclose(out, [0, 0, 0.5, 0], atol=1e-15)
    rho = np.outer(psi.vector, psi.vector.conj())
    np.testing.assert_allclose(op.to_dense(), loop_partial_transpose(rho, 2, 2), atol=1e-15)


def test_random_pts_operator_vs_dense(rng):
    psi = random_pure_state(9, seed=3)
    part = TriPartition((0, 1, 2), (3, 4, 5), (6, 7, 8))
    op = build_pt_operator(partition_state(psi, part))
    dense = op.to_dense()
    np.testing.assert_allclose(dense, dense.conj().T, atol=1e-12)
    for _ in range(20):
        v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        ref = dense @ v
        assert np.linalg.norm(op.matvec(v) - ref) < 1e-10 * np.linalg.norm(ref)
    x = rng.standard_normal((64, 5))
    np.testing.assert_allclose(op.matmat(x), dense @ x, atol=1e-12)
    np.testing.assert_allclose(op.rmatmat(x), dense.conj().T @ x, atol=1e-12)


def test_non_square_adjoint(rng):
    a = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    op = TnOperator([Tensor(a, ("r", "c"))], ("r",), ("c",))
    u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    np.testing.assert_allclose(op.rmatvec(u), a.conj().T @ u, atol=1e-13)
    with pytest.raises(ValueError):
        op.matvec(np.ones(3))


def test_trace(rng):
    psi = random_pure_state(6, seed=1)
    op = build_pt_operator(partition_state(psi, TriPartition((0, 1), (2, 3), (4, 5))))
    assert op.trace() == pytest.approx(1.0, abs=1e-12)


def test_dense_cap():
    op = TnOperator([Tensor(np.eye(100), ("x", "y"))], ("x",), ("y",))
    with pytest.raises(NetworkError):
        op.to_dense(cap=100)
