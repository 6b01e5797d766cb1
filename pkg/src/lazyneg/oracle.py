"""Dense reference quantities for small systems.

Everything here forms the density matrix explicitly and diagonalises it, so
it is limited to joint dimensions ``d_a * d_b <= ORACLE_CAP``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import eigvals_hermitian_dense
from .pts import PureState, TriPartition, partition_state

ORACLE_CAP = 4096


class OracleCapError(ValueError):
    pass


@dataclass
class DensityMatrix:
    """Density matrix on the fused ``(a, b)`` space, row-major in ``(a, b)``."""

    matrix: np.ndarray
    d_a: int
    d_b: int

    def __post_init__(self):
        m = np.asarray(self.matrix)
        n = self.d_a * self.d_b
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match dims "
                             f"{self.d_a}x{self.d_b}")
        if n > ORACLE_CAP:
            raise OracleCapError(f"joint dimension {n} above oracle cap {ORACLE_CAP}")
        scale = max(np.abs(m).max(initial=0.0), 1e-300)
        if np.abs(m - m.conj().T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace {np.trace(m).real} != 1")
        self.matrix = m

    def partial_transpose(self) -> np.ndarray:
        """``rho^{T_B}[(a,b),(a',b')] = rho[(a,b'),(a',b)]``."""
        r = self.matrix.reshape(self.d_a, self.d_b, self.d_a, self.d_b)
        return r.transpose(0, 3, 2, 1).reshape(self.matrix.shape)


def reduce_dense(psi: PureState, part: TriPartition) -> DensityMatrix:
    """Explicit partial trace of ``|psi><psi|`` over C."""
    if part.d_a * part.d_b > ORACLE_CAP:
        raise OracleCapError(
            f"joint dimension {part.d_a * part.d_b} above oracle cap {ORACLE_CAP}")
    m = partition_state(psi, part).data.reshape(part.d_a * part.d_b, part.d_c)
    return DensityMatrix(m @ m.conj().T, part.d_a, part.d_b)


def maximally_mixed(d_a: int, d_b: int) -> DensityMatrix:
    n = d_a * d_b
    return DensityMatrix(np.eye(n) / n, d_a, d_b)


def exact_logneg(rho: DensityMatrix) -> float:
    lam = eigvals_hermitian_dense(rho.partial_transpose(), check=False)
    return math.log2(float(np.abs(lam).sum()))


def purity(rho: DensityMatrix) -> float:
    m = rho.matrix
    return float(np.vdot(m, m).real)


def variance_bound(rho: DensityMatrix) -> float:
    """Upper bound ``2 Tr(rho^2)`` on the single-probe variance of the
    trace-norm estimator with Rademacher or Gaussian probes."""
    return 2.0 * purity(rho)


def exact_entropy(rho: DensityMatrix, floor: float = 1e-14) -> float:
    lam = eigvals_hermitian_dense(rho.matrix, check=False)
    lam = lam[lam > floor]
    return float(-(lam * np.log2(lam)).sum())


def renyi_half_entropy(psi: PureState, sites_a) -> float:
    """``2 log2 sum_i s_i`` over the Schmidt values across ``sites_a`` vs rest."""
    rest = [s for s in range(psi.L) if s not in set(sites_a)]
    m = np.transpose(psi.tensor, list(sites_a) + rest).reshape(psi.p ** len(sites_a), -1)
    s = np.linalg.svd(m, compute_uv=False)
    return 2.0 * math.log2(float(s.sum()))
