"""Two-site DMRG for open chains given as an MPO."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import eig_sym_tridiagonal, svd
from .mps import Mps, canonicalize
from .slq import LanczosState, lanczos_step


@dataclass(frozen=True)
class DmrgConfig:
    chi_max: int = 128
    cutoff: float = 1e-8
    energy_tol: float = 1e-8
    max_sweeps: int = 40
    chi_init: int = 8
    krylov_dim: int = 24
    eig_tol: float = 1e-10

    def __post_init__(self):
        if self.chi_max < 2:
            raise ValueError("chi_max must be >= 2")


@dataclass
class DmrgResult:
    mps: Mps
    energy: float
    sweep_energies: list = field(default_factory=list)
    converged: bool = False
    max_discarded: float = 0.0

    @property
    def chi_profile(self) -> list[int]:
        return self.mps.bond_dims


class _TwoSiteH:
    """Effective Hamiltonian on ``theta[a, s, t, b]``."""

    def __init__(self, left, w1, w2, right, shape):
        self.left, self.w1, self.w2, self.right = left, w1, w2, right
        self.tshape = shape
        n = int(np.prod(shape))
        self.shape = (n, n)

    def matvec(self, v):
        x = v.reshape(self.tshape)
        x = np.tensordot(self.left, x, axes=(2, 0))            # a w s' t' b'
        x = np.tensordot(x, self.w1, axes=([1, 2], [0, 2]))    # a t' b' s x
        x = np.tensordot(x, self.w2, axes=([4, 1], [0, 2]))    # a b' s t y
        x = np.tensordot(x, self.right, axes=([1, 4], [2, 1]))  # a s t b
        return x.reshape(-1)


def _ground_state(op, v0, kdim, tol, restarts=6):
    v = v0
    e = math.inf
    for _ in range(restarts):
        state = LanczosState(v)
        for _ in range(min(kdim, op.shape[0])):
            lanczos_step(op, state)
            if state.terminated:
                break
        theta, z = eig_sym_tridiagonal(state.tridiagonal(), vectors=True)
        y = z[:, 0]
        v = state.basis.T @ y
        v = v / np.linalg.norm(v)
        e = float(theta[0])
        resid = 0.0 if state.terminated else state.beta[-1] * abs(y[-1])
        if resid < tol * max(1.0, abs(e)):
            break
    return e, v


def _split(theta, chi_max, cutoff, move_right):
    a, s, t, b = theta.shape
    res = svd(theta.reshape(a * s, t * b))
    sv = res.s
    w = sv * sv
    total = w.sum()
    # smallest rank whose discarded weight is within the cutoff
    tail = np.cumsum(w[::-1])[::-1]           # tail[k] = sum_{j >= k} w_j
    keep = int(np.count_nonzero(tail > cutoff * total))
    keep = max(1, min(keep, chi_max))
    disc = float(w[keep:].sum() / total) if total > 0 else 0.0
    u = res.u[:, :keep]
    vh = res.vh[:keep]
    sk = sv[:keep] / np.linalg.norm(sv[:keep])
    if move_right:
        return u.reshape(a, s, keep), (sk[:, None] * vh).reshape(keep, t, b), disc
    return (u * sk).reshape(a, s, keep), vh.reshape(keep, t, b), disc


def _grow_left(env, a, w):
    # env[a, w, a'] with ket a (upper), bra a' (lower); a is (l, s, r)
    x = np.tensordot(env, a, axes=(2, 0))                  # a w s' r'
    x = np.tensordot(x, w, axes=([1, 2], [0, 2]))          # a r' s x
    x = np.tensordot(a.conj(), x, axes=([0, 1], [0, 2]))   # r r' x
    return x.transpose(0, 2, 1)


def _grow_right(env, b, w):
    x = np.tensordot(b, env, axes=(2, 2))                  # l' s' b w
    x = np.tensordot(x, w, axes=([1, 3], [2, 3]))          # l' b wl s
    x = np.tensordot(b.conj(), x, axes=([1, 2], [3, 1]))   # l l' wl
    return x.transpose(0, 2, 1)


def random_start(L: int, p: int, chi: int, seed: int) -> Mps:
    rng = np.random.default_rng(seed)
    dims = [min(chi, p ** min(i, L - i)) for i in range(L + 1)]
    ts = [rng.standard_normal((dims[i], p, dims[i + 1])) for i in range(L)]
    return canonicalize(Mps(ts), 0)


def dmrg2(mpo, cfg: DmrgConfig | None = None, seed: int = 0,
          callback=None) -> DmrgResult:
    """Ground state of an open-chain MPO by two-site sweeps.

    The state starts as a random real MPS of bond dimension
    ``cfg.chi_init``. One sweep goes left to right and back. Truncation keeps
    the smallest number of singular values whose discarded weight is below
    ``cfg.cutoff``, at most ``cfg.chi_max``. Iteration stops when the energy
    changes by less than ``cfg.energy_tol`` (relative) between sweeps.
    """
    cfg = cfg or DmrgConfig()
    L = len(mpo)
    p = mpo[0].shape[1]
    if L < 2:
        raise ValueError("DMRG needs at least two sites")
    mps = random_start(L, p, cfg.chi_init, seed)
    ts = list(mps.tensors)
    dtype = np.float64 if all(np.isrealobj(w) for w in mpo) else np.complex128
    ts = [t.astype(dtype) for t in ts]

    left = [None] * (L + 1)
    right = [None] * (L + 1)
    left[0] = np.ones((1, 1, 1), dtype=dtype)
    right[L] = np.ones((1, 1, 1), dtype=dtype)
    for i in range(L - 1, 0, -1):
        right[i] = _grow_right(right[i + 1], ts[i], mpo[i])

    energies = []
    max_disc = 0.0
    e = math.inf
    converged = False

    def update(i, move_right):
        nonlocal e, max_disc
        theta = np.tensordot(ts[i], ts[i + 1], axes=(2, 0))
        op = _TwoSiteH(left[i], mpo[i], mpo[i + 1], right[i + 2], theta.shape)
        e, v = _ground_state(op, theta.reshape(-1), cfg.krylov_dim, cfg.eig_tol)
        ts[i], ts[i + 1], disc = _split(v.reshape(theta.shape), cfg.chi_max,
                                        cfg.cutoff, move_right)
        max_disc = max(max_disc, disc)
        if move_right:
            left[i + 1] = _grow_left(left[i], ts[i], mpo[i])
        else:
            right[i + 1] = _grow_right(right[i + 2], ts[i + 1], mpo[i + 1])

    for sweep in range(cfg.max_sweeps):
        max_disc = 0.0
        for i in range(L - 1):
            update(i, True)
        for i in range(L - 2, -1, -1):
            update(i, False)
        # variational energy of the truncated state, not the last local
        # eigenvalue, which sits below it by the final truncation
        env = _grow_right(right[1], ts[0], mpo[0])
        e = float(env.reshape(-1)[0].real) / float(np.vdot(ts[0], ts[0]).real)
        energies.append(e)
        if callback is not None:
            callback(sweep, e, max(t.shape[2] for t in ts))
        if len(energies) > 1 and abs(energies[-2] - e) < cfg.energy_tol * max(1.0, abs(e)):
            converged = True
            break

    out = Mps(ts, "open", center=0)
    return DmrgResult(out, e, energies, converged, max_disc)
