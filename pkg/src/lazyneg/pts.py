"""Negativity of a densely stored pure state for any tri-partition.

The reduced, partially transposed density matrix of subsystems A and B is
never formed. It is kept as the pair ``{psi, conj(psi)}`` with the C indices
joined (partial trace) and the ket/bra roles of B exchanged (partial
transpose). Acting on a probe costs one pass over the state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import TnOperator
from .slq import SlqConfig, TraceEstimate, slq_trace
from .tensor import Tensor


@dataclass
class PureState:
    """State of ``L`` sites with local dimension ``p``, stored as a rank-L array."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor)
        if t.ndim < 1 or len(set(t.shape)) != 1:
            raise ValueError(f"expected equal site dims, got shape {t.shape}")
        self.tensor = t

    @classmethod
    def from_vector(cls, v, L: int, p: int = 2) -> "PureState":
        v = np.asarray(v)
        if v.size != p**L:
            raise ValueError(f"vector of size {v.size} is not {p}^{L}")
        return cls(v.reshape((p,) * L))

    @property
    def L(self) -> int:
        return self.tensor.ndim

    @property
    def p(self) -> int:
        return self.tensor.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.tensor.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def normalized(self) -> "PureState":
        return PureState(self.tensor / self.norm())


@dataclass(frozen=True)
class TriPartition:
    """Disjoint site sets A, B, C (0-based) covering ``range(L)``."""

    sites_a: tuple
    sites_b: tuple
    sites_c: tuple
    p: int = 2

    def __post_init__(self):
        a, b, c = (tuple(int(s) for s in x) for x in (self.sites_a, self.sites_b, self.sites_c))
        object.__setattr__(self, "sites_a", a)
        object.__setattr__(self, "sites_b", b)
        object.__setattr__(self, "sites_c", c)
        if not a or not b:
            raise ValueError("subsystems A and B must be non-empty")
        allsites = a + b + c
        if len(set(allsites)) != len(allsites):
            raise ValueError("site sets overlap")
        if sorted(allsites) != list(range(len(allsites))):
            raise ValueError("site sets must cover 0..L-1 exactly")

    @classmethod
    def from_sites(cls, L: int, sites_a: Sequence[int], sites_b: Sequence[int],
                   p: int = 2) -> "TriPartition":
        """C is everything not in A or B."""
        rest = tuple(s for s in range(L) if s not in set(sites_a) | set(sites_b))
        return cls(tuple(sites_a), tuple(sites_b), rest, p)

    @property
    def L(self) -> int:
        return len(self.sites_a) + len(self.sites_b) + len(self.sites_c)

    @property
    def d_a(self) -> int:
        return self.p ** len(self.sites_a)

    @property
    def d_b(self) -> int:
        return self.p ** len(self.sites_b)

    @property
    def d_c(self) -> int:
        return self.p ** len(self.sites_c)

    def swapped(self) -> "TriPartition":
        return TriPartition(self.sites_b, self.sites_a, self.sites_c, self.p)


def partition_state(psi: PureState, part: TriPartition) -> Tensor:
    """Permute and fuse the sites of ``psi`` into a ``(d_a, d_b, d_c)`` tensor.

    With C empty the third index has dim 1.
    """
    if psi.L != part.L or psi.p != part.p:
        raise ValueError(f"partition for L={part.L}, p={part.p} does not fit a "
                         f"state with L={psi.L}, p={psi.p}")
    order = part.sites_a + part.sites_b + part.sites_c
    data = np.transpose(psi.tensor, order).reshape(part.d_a, part.d_b, part.d_c)
    return Tensor(np.ascontiguousarray(data), ("a", "b", "c"))


def build_pt_operator(psi_abc: Tensor, transpose: bool = True) -> TnOperator:
    """Lazy ``rho_AB^{T_B}`` (or ``rho_AB`` if ``transpose`` is False).

    Rows are indexed by ``(a, b)`` and columns by ``(a', b')``, both row-major.
    The network holds only the state and its conjugate.
    """
    data = psi_abc.data if isinstance(psi_abc, Tensor) else np.asarray(psi_abc)
    if data.ndim != 3:
        raise ValueError(f"expected a rank-3 (a, b, c) tensor, got rank {data.ndim}")
    if transpose:
        # rho^{T_B}[(a,b),(a',b')] = sum_c psi[a,b',c] conj(psi[a',b,c])
        ket = Tensor(data, ("a", "bp", "c"))
        bra = Tensor(data.conj(), ("ap", "b", "c"))
    else:
        ket = Tensor(data, ("a", "b", "c"))
        bra = Tensor(data.conj(), ("ap", "bp", "c"))
    return TnOperator([ket, bra], ("a", "b"), ("ap", "bp"))


@dataclass
class Negativity:
    """Logarithmic negativity with its 1-sigma error.

    The error combines the Hutchinson sampling error with the mean Lanczos
    quadrature error of the probes.

    Unpacks as ``(E, err)``; the underlying trace-norm estimate is kept in
    ``trace``.
    """

    E: float
    err: float
    trace: TraceEstimate | None = None

    def __iter__(self):
        return iter((self.E, self.err))

    @property
    def converged(self) -> bool:
        return self.trace is None or self.trace.converged

    @property
    def n_samples(self) -> int:
        return 0 if self.trace is None else self.trace.n_used

    @classmethod
    def from_trace_norm(cls, est: TraceEstimate) -> "Negativity":
        # the trace norm is >= Tr rho = 1, so noise below 1 is clamped away
        t = max(est.mean, 1.0)
        return cls(math.log2(t), est.total_error / (t * math.log(2)), est)


def logneg_operator(op, cfg: SlqConfig | None = None) -> Negativity:
    """Negativity from any lazy ``rho^{T_B}`` operator."""
    return Negativity.from_trace_norm(slq_trace(op, "abs", cfg))


def logneg_pts(psi: PureState, part: TriPartition,
               cfg: SlqConfig | None = None) -> Negativity:
    """Logarithmic negativity between A and B of a dense pure state."""
    op = build_pt_operator(partition_state(psi, part))
    return logneg_operator(op, cfg)


def random_pure_state(L: int, seed: int = 0, p: int = 2) -> PureState:
    """Normalised state with i.i.d. complex Gaussian amplitudes."""
    if L < 2:
        raise ValueError("need at least two sites")
    rng = np.random.default_rng(seed)
    shape = (p,) * L
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return PureState(v / np.linalg.norm(v))


def analytic_random_logneg(d_a: int, d_b: int, d_c: int) -> float:
    """Large-dimension average negativity of random pure states.

    With ``R = 2 sqrt(d_a d_b / d_c)``, returns
    ``log2[(2/pi) asin(1/R) + 2 (1 + 2R^2) / (3 pi R) sqrt(1 - 1/R^2)]``,
    and 0 when ``R <= 1``.
    """
    if min(d_a, d_b, d_c) < 1:
        raise ValueError("dims must be >= 1")
    r = 2.0 * math.sqrt(d_a * d_b / d_c)
    if r <= 1.0:
        return 0.0
    val = (2.0 / math.pi) * math.asin(1.0 / r) + \
        2.0 * (1.0 + 2.0 * r * r) / (3.0 * math.pi * r) * math.sqrt(1.0 - 1.0 / r**2)
    return math.log2(val)
