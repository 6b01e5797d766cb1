"""Matrix product states and the compressed ``rho_AB^{T_B}`` network.

Site tensors are stored as ``(left, phys, right)`` arrays. For contiguous
blocks A and B separated by a gap, the partially transposed reduced density
matrix is assembled as a small tensor network:

* Under open boundaries the state is brought into canonical form with its
  centre inside the span of A, gap and B, so the outer environments reduce
  to identities and are dropped by joining ket and bra bond labels.
* The gap (and, for periodic chains, the outer environment) is replaced by a
  truncated SVD of its transfer matrix.
* A and B are each replaced, when that is smaller, by a factor of their own
  bond-space Gram matrix. The new physical index spans the support of the
  block's reduced state, so this is an isometric change of basis that
  leaves the negativity unchanged.
* The ket and bra physical labels of B are exchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import cholesky_psd, svd, truncated_svd
from .network import DEFAULT_DENSE_CAP, TnOperator
from .pts import Negativity, PureState, logneg_operator
from .slq import SlqConfig
from .tensor import Tensor

DEFAULT_CUTOFF = 1e-10
SEPARABLE_RATIO = 1e10


class MpsError(ValueError):
    pass


@dataclass
class Mps:
    """Chain of ``(left, phys, right)`` site tensors.

    ``boundary`` is ``'open'`` (edge bonds of dim 1) or ``'periodic'`` (the
    right bond of the last site is the left bond of the first). ``center``
    records the orthogonality centre after :func:`canonicalize`.
    """

    tensors: list
    boundary: str = "open"
    center: int | None = None

    def __post_init__(self):
        self.tensors = [np.asarray(t) for t in self.tensors]
        if self.boundary not in ("open", "periodic"):
            raise MpsError(f"unknown boundary {self.boundary!r}")
        if not self.tensors:
            raise MpsError("empty MPS")
        for i, t in enumerate(self.tensors):
            if t.ndim != 3:
                raise MpsError(f"site {i} tensor has rank {t.ndim}, expected 3")
        p = self.tensors[0].shape[1]
        L = len(self.tensors)
        for i in range(L):
            if self.tensors[i].shape[1] != p:
                raise MpsError("all sites must share the physical dimension")
            nxt = self.tensors[(i + 1) % L]
            if i < L - 1 or self.boundary == "periodic":
                if self.tensors[i].shape[2] != nxt.shape[0]:
                    raise MpsError(f"bond mismatch between sites {i} and {(i + 1) % L}")
        if self.boundary == "open" and (self.tensors[0].shape[0] != 1
                                        or self.tensors[-1].shape[2] != 1):
            raise MpsError("open-boundary edge bonds must have dim 1")

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def p(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        """Dim of the bond left of each site, plus the final right bond."""
        return [t.shape[0] for t in self.tensors] + [self.tensors[-1].shape[2]]

    @property
    def chi(self) -> int:
        return max(self.bond_dims)

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    def copy(self) -> "Mps":
        return Mps([t.copy() for t in self.tensors], self.boundary, self.center)


@dataclass(frozen=True)
class BlockSpec:
    """Contiguous blocks A and B (0-based, A left of B) with a gap between."""

    start_a: int
    len_a: int
    gap: int
    len_b: int

    def __post_init__(self):
        if self.start_a < 0 or self.len_a < 1 or self.len_b < 1 or self.gap < 0:
            raise ValueError(f"invalid blocks {self}")

    @classmethod
    def central(cls, L: int, l_ab: int, gap: int = 0) -> "BlockSpec":
        """Two blocks of ``l_ab // 2`` sites (A gets the extra one if odd)
        centred on the middle of the chain."""
        if l_ab < 2:
            raise ValueError("L_AB must be at least 2")
        lb = l_ab // 2
        la = l_ab - lb
        span = l_ab + gap
        if span > L:
            raise ValueError(f"blocks of total span {span} do not fit L={L}")
        return cls((L - span) // 2, la, gap, lb)

    @property
    def block_a(self) -> range:
        return range(self.start_a, self.start_a + self.len_a)

    @property
    def block_b(self) -> range:
        s = self.start_a + self.len_a + self.gap
        return range(s, s + self.len_b)

    @property
    def gap_sites(self) -> range:
        return range(self.start_a + self.len_a, self.block_b.start)

    @property
    def end(self) -> int:
        return self.block_b.stop

    @property
    def l_ab(self) -> int:
        return self.len_a + self.len_b

    def check(self, L: int):
        if self.end > L:
            raise ValueError(f"blocks end at site {self.end}, beyond L={L}")


@dataclass
class CompressedSection:
    """Result of compressing a contiguous section.

    ``left_factor[kl, bl, g]`` and ``right_factor[g, kr, br]`` reproduce the
    section's transfer matrix with ``g`` of dim ``rank``. Subsystem sections
    additionally get ``physical[kl, t, kr]`` from the vertical decomposition,
    whose ket/bra pair over ``t`` reproduces the section with open physical
    index.
    """

    sites: tuple
    kind: str
    left_factor: np.ndarray | None
    right_factor: np.ndarray | None
    singular_values: np.ndarray
    physical: np.ndarray | None = None
    method: str = ""
    hit_rank_cap: bool = False

    @property
    def rank(self) -> int:
        return self.singular_values.size

    @property
    def separable(self) -> bool:
        s = self.singular_values
        return s.size == 1 or (s.size > 1 and s[0] > SEPARABLE_RATIO * s[1])


# ---------------------------------------------------------------------------
# construction and gauge
# ---------------------------------------------------------------------------

def mps_from_dense(psi: PureState, chi_max: int | None = None,
                   cutoff: float = 0.0, cap: int = DEFAULT_DENSE_CAP) -> Mps:
    """Open-boundary MPS by a left-to-right sweep of SVDs.

    Singular values below ``cutoff * s_max`` are dropped, and at most
    ``chi_max`` kept. The result is normalised.
    """
    if psi.tensor.size > cap:
        raise MpsError(f"state of size {psi.tensor.size} above cap {cap}")
    L, p = psi.L, psi.p
    rest = psi.vector.reshape(1, -1)
    tensors = []
    for _ in range(L - 1):
        left = rest.shape[0]
        m = rest.reshape(left * p, -1)
        res = svd(m)
        s = res.s
        keep = int(np.count_nonzero(s > cutoff * s[0])) if s[0] > 0 else 1
        keep = max(keep, 1)
        if chi_max is not None:
            keep = min(keep, chi_max)
        tensors.append(res.u[:, :keep].reshape(left, p, keep))
        rest = s[:keep, None] * res.vh[:keep]
    last = rest.reshape(rest.shape[0], p, 1)
    tensors.append(last / np.linalg.norm(last))
    return Mps(tensors, "open", center=L - 1)


def dense_from_mps(m: Mps, cap: int = DEFAULT_DENSE_CAP) -> PureState:
    if m.p ** m.L > cap:
        raise MpsError(f"dense state of size {m.p ** m.L} above cap {cap}")
    out = m.tensors[0]
    for t in m.tensors[1:]:
        l0 = out.shape[0]
        out = (out.reshape(-1, out.shape[-1]) @ t.reshape(t.shape[0], -1))
        out = out.reshape(l0, -1, t.shape[2])
    vec = np.einsum("aia->i", out) if m.boundary == "periodic" else out[0, :, 0]
    return PureState.from_vector(vec, m.L, m.p)


def canonicalize(m: Mps, center: int) -> Mps:
    """Mixed canonical form with the norm gauge at ``center``.

    Sites left of ``center`` become left isometries, sites right of it right
    isometries, and the centre tensor is normalised.
    """
    if m.boundary != "open":
        raise MpsError("canonical gauge needs open boundaries")
    if not 0 <= center < m.L:
        raise ValueError(f"center {center} outside 0..{m.L - 1}")
    ts = [t.copy() for t in m.tensors]
    for i in range(center):
        l, p, r = ts[i].shape
        q, rr = np.linalg.qr(ts[i].reshape(l * p, r))
        ts[i] = q.reshape(l, p, q.shape[1])
        ts[i + 1] = np.tensordot(rr, ts[i + 1], axes=(1, 0))
    for i in range(m.L - 1, center, -1):
        l, p, r = ts[i].shape
        q, rr = np.linalg.qr(ts[i].reshape(l, p * r).conj().T)
        ts[i] = q.conj().T.reshape(q.shape[1], p, r)
        ts[i - 1] = np.tensordot(ts[i - 1], rr.conj().T, axes=(2, 0))
    ts[center] = ts[center] / np.linalg.norm(ts[center])
    return Mps(ts, "open", center=center)


def is_left_isometric(t: np.ndarray, tol: float = 1e-10) -> bool:
    l, p, r = t.shape
    a = t.reshape(l * p, r)
    return bool(np.abs(a.conj().T @ a - np.eye(r)).max() < tol)


def is_right_isometric(t: np.ndarray, tol: float = 1e-10) -> bool:
    l, p, r = t.shape
    a = t.reshape(l, p * r)
    return bool(np.abs(a @ a.conj().T - np.eye(l)).max() < tol)


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

def _section_sites(m: Mps, sites) -> list[int]:
    sites = [int(s) % m.L for s in sites]
    if not sites:
        raise ValueError("empty section")
    for a, b in zip(sites, sites[1:]):
        if b != (a + 1) % m.L or (m.boundary == "open" and b != a + 1):
            raise ValueError(f"section {sites} is not contiguous")
    return sites


def transfer_matrix(m: Mps, sites: Sequence[int]) -> TnOperator:
    """Lazy transfer matrix of a contiguous section.

    Rows are the fused left bond pair ``(kL, bL)`` (ket, bra), columns the
    right bond pair ``(kR, bR)``; physical indices are summed between the ket
    and bra layers.
    """
    sites = _section_sites(m, sites)
    n = len(sites)

    def bond(j, layer):
        if j == 0:
            return layer + "L"
        if j == n:
            return layer + "R"
        return f"{layer}{j}"

    tensors = []
    for j, s in enumerate(sites):
        t = m.tensors[s]
        tensors.append(Tensor(t, (bond(j, "k"), f"s{j}", bond(j + 1, "k"))))
        tensors.append(Tensor(t.conj(), (bond(j, "b"), f"s{j}", bond(j + 1, "b"))))
    return TnOperator(tensors, ("kL", "bL"), ("kR", "bR"))


def lateral_compress(m: Mps, sites: Sequence[int], cutoff: float = DEFAULT_CUTOFF,
                     kind: str = "environment", seed: int = 0) -> CompressedSection:
    """Truncated SVD of a section's transfer matrix.

    Singular values are split evenly, ``sqrt(s)`` into each factor.
    """
    sites = _section_sites(m, sites)
    op = transfer_matrix(m, sites)
    res = truncated_svd(op, cutoff=cutoff, seed=seed)
    chi_l = m.tensors[sites[0]].shape[0]
    chi_r = m.tensors[sites[-1]].shape[2]
    root = np.sqrt(res.s)
    left = (res.u * root).reshape(chi_l, chi_l, res.rank)
    right = (root[:, None] * res.vh).reshape(res.rank, chi_r, chi_r)
    return CompressedSection(tuple(sites), kind, left, right, res.s,
                             hit_rank_cap=res.hit_rank_cap)


def vertical_decompose(section: CompressedSection,
                       zero_tol: float = 1e-14) -> CompressedSection:
    """Re-expose a physical index on a laterally compressed subsystem.

    The factors are regrouped into ``W[(kl, kr), (bl, br)]``, which is
    Hermitian positive semidefinite, and ``W = F F^H`` is factorised. ``F``
    reshaped to ``(kl, t, kr)`` is the new site tensor. Factor columns that
    are numerically zero are dropped.
    """
    x, y = section.left_factor, section.right_factor
    chi_l, chi_r = x.shape[0], y.shape[1]
    w = np.tensordot(x, y, axes=(2, 0))              # kl bl kr br
    w = w.transpose(0, 2, 1, 3).reshape(chi_l * chi_r, chi_l * chi_r)
    # truncation leaves asymmetry at the cutoff level; W is Hermitian exactly
    w = 0.5 * (w + w.conj().T)
    chol = cholesky_psd(w)
    f = chol.factor
    norms = np.linalg.norm(f, axis=0)
    if norms.size:
        f = f[:, norms > zero_tol * norms.max()] if norms.max() > 0 else f[:, :1]
    phys = f.reshape(chi_l, chi_r, -1).transpose(0, 2, 1)
    return CompressedSection(section.sites, "subsystem", x, y,
                             section.singular_values, phys, chol.method,
                             section.hit_rank_cap)


def _identity_section(sites, chi: int, at_left_end: bool, dtype) -> CompressedSection:
    eye = np.eye(chi, dtype=dtype)
    phys = eye.reshape(1, chi, chi) if at_left_end else eye.reshape(chi, chi, 1)
    return CompressedSection(tuple(sites), "subsystem", None, None,
                             np.ones(1), phys, "identity")


# ---------------------------------------------------------------------------
# the compressed network
# ---------------------------------------------------------------------------

@dataclass
class CompressedNetwork:
    """Everything needed to act with (and to audit) the compressed operator."""

    operator: TnOperator
    mps: Mps
    blocks: BlockSpec
    sections: dict = field(default_factory=dict)
    trace: float = 1.0
    chi: int = 1

    @property
    def largest_tensor(self) -> int:
        return self.operator.network.max_tensor_size


def compress_blocks(m: Mps, blocks: BlockSpec, cutoff: float = DEFAULT_CUTOFF,
                    transpose: bool = True, end_shortcut: bool = True,
                    compress_subsystems: bool | None = None) -> CompressedNetwork:
    """Assemble the compressed ``rho_AB^{T_B}`` network for ``blocks``.

    Parameters
    ----------
    cutoff : float
        Relative singular-value cutoff of every lateral compression.
    transpose : bool
        If False the network represents ``rho_AB`` itself.
    end_shortcut : bool
        Under open boundaries, a block that touches a chain end and is made
        of isometries is replaced by identity tensors without any
        decomposition.
    compress_subsystems : bool, optional
        Force (True) or forbid (False) the vertical decomposition of A and B.
        By default a block is decomposed only when its bond pair is smaller
        than its physical space.
    """
    blocks.check(m.L)
    A, B, G = list(blocks.block_a), list(blocks.block_b), list(blocks.gap_sites)
    L, p = m.L, m.p
    periodic = m.boundary == "periodic"

    if periodic:
        work = m
    else:
        # put the centre where the most blocks stay isometric towards a chain end
        if A[0] == 0 and G:
            c = G[0]
        elif A[0] == 0:
            c = B[0]
        elif B[-1] == L - 1:
            c = A[-1] if not G else G[-1]
        else:
            c = A[0]
        work = canonicalize(m, c)
    ts = work.tensors
    dtype = work.dtype

    def kbond(j):
        return f"k{j % L}" if periodic else f"k{j}"

    left_edge, right_edge = A[0], B[-1] + 1

    def bbond(j):
        # open chains: outer environments are identities, so bra edge bonds
        # are the ket ones
        if not periodic and j in (left_edge, right_edge):
            return kbond(j)
        return f"b{j % L}" if periodic else f"b{j}"

    tensors: list[Tensor] = []
    left_labels: list[str] = []
    right_labels: list[str] = []
    sections: dict = {}

    def add_subsystem(name, sites, ket_out):
        """``ket_out``: ket physical labels go to the row group."""
        chi_l = ts[sites[0]].shape[0]
        chi_r = ts[sites[-1]].shape[2]
        at_left = not periodic and sites[0] == 0 and work.center > sites[-1]
        at_right = not periodic and sites[-1] == L - 1 and work.center < sites[0]
        sec = None
        if end_shortcut and (at_left or at_right):
            sec = _identity_section(sites, chi_r if at_left else chi_l, at_left, dtype)
        else:
            worth = chi_l * chi_r < p ** len(sites)
            if compress_subsystems is not None:
                worth = compress_subsystems
            if worth:
                sec = vertical_decompose(
                    lateral_compress(work, sites, cutoff, kind="subsystem"))
        lo, hi = kbond(sites[0]), kbond(sites[-1] + 1)
        blo, bhi = bbond(sites[0]), bbond(sites[-1] + 1)
        if sec is not None:
            sections[name] = sec
            ks, bs = f"{name}_ket", f"{name}_bra"
            tensors.append(Tensor(sec.physical, (lo, ks, hi)))
            tensors.append(Tensor(sec.physical.conj(), (blo, bs, bhi)))
            pairs = [(ks, bs)]
        else:
            # small block: merge its sites into one tensor with a fused
            # physical index; size chi_l * p^n * chi_r <= (chi_l chi_r)^2
            blk = ts[sites[0]]
            for j in sites[1:]:
                blk = np.tensordot(blk, ts[j], axes=(blk.ndim - 1, 0))
            blk = blk.reshape(chi_l, -1, chi_r)
            ks, bs = f"{name}_ket", f"{name}_bra"
            tensors.append(Tensor(blk, (lo, ks, hi)))
            tensors.append(Tensor(blk.conj(), (blo, bs, bhi)))
            pairs = [(ks, bs)]
        for ks, bs in pairs:
            left_labels.append(ks if ket_out else bs)
            right_labels.append(bs if ket_out else ks)

    def add_environment(name, sites):
        if not sites:
            return
        sec = lateral_compress(work, sites, cutoff, kind="environment")
        sections[name] = sec
        g = f"{name}_g"
        tensors.append(Tensor(sec.left_factor, (kbond(sites[0]), bbond(sites[0]), g)))
        tensors.append(Tensor(sec.right_factor, (g, kbond(sites[-1] + 1), bbond(sites[-1] + 1))))

    add_subsystem("A", A, ket_out=True)
    add_environment("gap", G)
    add_subsystem("B", B, ket_out=not transpose)
    if periodic:
        outer = [(B[-1] + 1 + i) % L for i in range(L - len(A) - len(B) - len(G))]
        add_environment("outer", outer)

    op = TnOperator(tensors, left_labels, right_labels)
    tr = op.trace()
    if abs(tr.imag) > 1e-8 * max(abs(tr.real), 1e-300) or not tr.real > 0:
        raise MpsError(f"compressed network has non-positive trace {tr}")
    scale = 1.0 / tr.real
    tensors[0] = tensors[0] * scale
    op = TnOperator(tensors, left_labels, right_labels)
    net = CompressedNetwork(op, work, blocks, sections, tr.real, work.chi)
    limit = max(net.chi ** 4, p * net.chi ** 2)
    if net.largest_tensor > limit:
        raise MpsError(f"compressed network holds a tensor of {net.largest_tensor} "
                       f"entries, above chi^4 = {limit}")
    return net


def build_compressed_pt_operator(m: Mps, blocks: BlockSpec,
                                 cutoff: float = DEFAULT_CUTOFF) -> TnOperator:
    return compress_blocks(m, blocks, cutoff).operator


def logneg_mps_blocks(m: Mps, blocks: BlockSpec, cfg: SlqConfig | None = None,
                      cutoff: float = DEFAULT_CUTOFF) -> Negativity:
    """Logarithmic negativity between two contiguous blocks of an MPS."""
    return logneg_operator(build_compressed_pt_operator(m, blocks, cutoff), cfg)


def random_mps(L: int, chi: int, p: int = 2, seed: int = 0,
               boundary: str = "open", complex_: bool = True) -> Mps:
    """Random MPS with bond dims capped at ``chi`` (and at the physical
    dimension reachable from the nearer open edge)."""
    rng = np.random.default_rng(seed)
    if boundary == "open":
        dims = [min(chi, p ** min(i, L - i)) for i in range(L + 1)]
    else:
        dims = [chi] * (L + 1)
    ts = []
    for i in range(L):
        shape = (dims[i], p, dims[i + 1])
        t = rng.standard_normal(shape)
        if complex_:
            t = t + 1j * rng.standard_normal(shape)
        ts.append(t / math.sqrt(t.size))
    out = Mps(ts, boundary)
    if boundary == "open":
        out = canonicalize(out, 0)
    return out
