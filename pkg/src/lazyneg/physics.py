"""Heisenberg chain: Hamiltonian, Neel quench and CFT fit.

Throughout, ``H = J sum_i sigma_i . sigma_{i+1}`` with Pauli matrices
(eigenvalues +-1), not spin-1/2 operators, so energies are 4x those of the
``S_i . S_j`` convention. Site states: index 0 is spin up (sigma^z = +1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .linalg import eig_sym_tridiagonal
from .network import DEFAULT_DENSE_CAP, FunctionOperator
from .pts import PureState
from .slq import LanczosState, lanczos_step

# sigma.sigma on two sites, basis |00>, |01>, |10>, |11>; equals 2 SWAP - 1
BOND = np.array([[1.0, 0.0, 0.0, 0.0],
                 [0.0, -1.0, 2.0, 0.0],
                 [0.0, 2.0, -1.0, 0.0],
                 [0.0, 0.0, 0.0, 1.0]])

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1j], [1j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
SP = np.array([[0.0, 1.0], [0.0, 0.0]])   # sigma^+ = (X + iY) / 2
SM = SP.T.copy()


@dataclass(frozen=True)
class HeisenbergModel:
    L: int
    J: float = 1.0
    boundary: str = "open"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("Heisenberg chain needs L >= 2")
        if self.boundary != "open":
            raise ValueError("only open boundaries are supported")


@dataclass(frozen=True)
class QuenchConfig:
    t_max: float
    dt: float = 0.02
    krylov_dim: int = 20
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


def heisenberg_dense(model: HeisenbergModel, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Real ``2^L x 2^L`` Hamiltonian matrix."""
    n = 2 ** model.L
    if n * n > cap:
        raise ValueError(f"dense Hamiltonian with {n * n} entries above cap {cap}")
    h = np.zeros((n, n))
    for i in range(model.L - 1):
        h += np.kron(np.kron(np.eye(2 ** i), BOND), np.eye(2 ** (model.L - i - 2)))
    return model.J * h


def heisenberg_apply(model: HeisenbergModel, v: np.ndarray) -> np.ndarray:
    """``H v`` bond by bond without forming ``H``."""
    L = model.L
    out = np.zeros_like(v, dtype=np.result_type(v, np.float64))
    for i in range(L - 1):
        x = v.reshape(2 ** i, 4, 2 ** (L - i - 2))
        out += np.einsum("ij,ajb->aib", BOND, x).reshape(-1)
    return model.J * out


def heisenberg_operator(model: HeisenbergModel) -> FunctionOperator:
    return FunctionOperator(lambda v: heisenberg_apply(model, v), 2 ** model.L,
                            np.float64)


def heisenberg_mpo(model: HeisenbergModel) -> list[np.ndarray]:
    """Bond-dimension-5 MPO; site tensors are ``(w_left, s_out, s_in, w_right)``.

    Uses ``XX + YY = 2 (s+ s- + s- s+)`` so every tensor is real.
    """
    J = model.J
    w = np.zeros((5, 5, 2, 2))
    eye = np.eye(2)
    w[0, 0] = eye
    w[1, 0] = SP
    w[2, 0] = SM
    w[3, 0] = SZ
    w[4, 1] = 2 * J * SM
    w[4, 2] = 2 * J * SP
    w[4, 3] = J * SZ
    w[4, 4] = eye
    w = w.transpose(0, 2, 3, 1)               # (wl, s, s', wr)
    mpo = [w.copy() for _ in range(model.L)]
    mpo[0] = w[4:5].copy()
    mpo[-1] = w[:, :, :, 0:1].copy()
    return mpo


def mpo_to_dense(mpo: Sequence[np.ndarray]) -> np.ndarray:
    out = mpo[0]                               # (1, s, s', w)
    for w in mpo[1:]:
        out = np.tensordot(out, w, axes=(out.ndim - 1, 0))
    L = len(mpo)
    out = out.reshape(out.shape[1:-1])         # s0 s0' s1 s1' ...
    perm = list(range(0, 2 * L, 2)) + list(range(1, 2 * L, 2))
    n = int(np.prod(out.shape[: L]))
    return out.transpose(perm).reshape(n, n)


def neel_state(L: int) -> PureState:
    """``|up down up down ...>``."""
    idx = [i % 2 for i in range(L)]
    t = np.zeros((2,) * L, dtype=np.complex128)
    t[tuple(idx)] = 1.0
    return PureState(t)


def _krylov_step(apply, v: np.ndarray, dt: float, kdim: int):
    """One propagator step ``exp(-i H dt) v``; returns (new vector, residual)."""
    state = LanczosState(v)
    op = _Apply(apply, v.size)
    for _ in range(min(kdim, v.size)):
        lanczos_step(op, state)
        if state.terminated:
            break
    theta, z = eig_sym_tridiagonal(state.tridiagonal(), vectors=True)
    coef = z @ (np.exp(-1j * theta * dt) * z[0])
    out = state.beta[0] * (state.basis.T @ coef)
    if state.terminated:
        return out, 0.0
    resid = state.beta[0] * state.beta[-1] * abs(coef[-1])
    return out, resid


class _Apply:
    def __init__(self, f, n):
        self.matvec = f
        self.shape = (n, n)


def evolve(psi: PureState, model: HeisenbergModel, cfg: QuenchConfig
           ) -> Iterator[tuple[float, PureState]]:
    """Yield ``(t, psi(t))`` on the grid ``t = 0, dt, ..., t_max``.

    Each grid step applies a Lanczos approximation of ``exp(-i H dt)``; if
    the Krylov residual estimate exceeds ``cfg.residual_tol`` the step is
    split in halves until it does not.
    """
    if psi.L != model.L:
        raise ValueError("state and model sizes differ")
    v = psi.vector.astype(np.complex128)

    def apply(x):
        return heisenberg_apply(model, x)

    yield 0.0, PureState.from_vector(v.copy(), model.L)
    for n in range(1, cfg.n_steps + 1):
        v = _advance(apply, v, cfg.dt, cfg.krylov_dim, cfg.residual_tol)
        yield n * cfg.dt, PureState.from_vector(v.copy(), model.L)


def _advance(apply, v, dt, kdim, tol, depth=0):
    if not np.any(v):
        return v
    out, resid = _krylov_step(apply, v, dt, kdim)
    if resid <= tol or depth > 30:
        return out
    half = _advance(apply, v, dt / 2, kdim, tol, depth + 1)
    return _advance(apply, half, dt / 2, kdim, tol, depth + 1)


def energy(psi: PureState, model: HeisenbergModel) -> float:
    v = psi.vector
    return float(np.vdot(v, heisenberg_apply(model, v)).real)


@dataclass
class CftFit:
    """``E = (c/4) log2(L_AB/4) + K`` with 1-sigma errors."""

    c: float
    c_err: float
    k_const: float
    k_err: float
    n_points: int

    def predict(self, l_ab):
        return self.c / 4.0 * np.log2(np.asarray(l_ab) / 4.0) + self.k_const


def cft_fit(points: Sequence[tuple[float, float]], L_total: int) -> CftFit:
    """Least-squares fit of block negativities to the log law.

    Only points with ``L_AB <= L_total / 2`` are used.
    """
    pts = [(float(l), float(e)) for l, e in points if l <= L_total / 2]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points with L_AB <= {L_total / 2}, got {len(pts)}")
    x = np.log2(np.array([l for l, _ in pts]) / 4.0)
    y = np.array([e for _, e in pts])
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    res = y - design @ coef
    dof = len(pts) - 2
    s2 = float(res @ res) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    slope, icpt = coef
    return CftFit(4.0 * float(slope), 4.0 * math.sqrt(max(cov[0, 0], 0.0)),
                  float(icpt), math.sqrt(max(cov[1, 1], 0.0)), len(pts))
