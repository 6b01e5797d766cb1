"""Lazily contracted tensor networks used as linear operators.

A :class:`TnOperator` is a set of tensors whose open labels are split into an
output ('left') group and an input ('right') group. Acting on a vector means
reshaping the vector into a tensor over the right labels, adding it to the
network and contracting everything down to the left labels. The dense
operator is never formed.

Contraction orders come from a greedy planner that treats the probe vector
as an ordinary member of the network, so the plan knows where the vector
enters.
"""
from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor, contract_pair, conjugate

BATCH = "__batch__"
DEFAULT_DENSE_CAP = 2**26


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class ContractionPath:
    """Pairwise contraction steps in SSA form.

    Inputs are numbered ``0..n-1``; the result of step ``k`` gets id ``n+k``.
    """

    steps: tuple[tuple[int, int], ...]
    peak_size: int
    flops: int
    # label order of the final tensor before any transpose
    result_labels: tuple[str, ...] = ()


class TensorNetwork:
    """A list of tensors where each label occurs once (open) or twice
    (contracted)."""

    def __init__(self, tensors: Sequence[Tensor]):
        self.tensors = list(tensors)
        counts: dict[str, int] = {}
        dims: dict[str, int] = {}
        for t in self.tensors:
            for lb, d in zip(t.labels, t.shape):
                counts[lb] = counts.get(lb, 0) + 1
                if dims.setdefault(lb, d) != d:
                    raise NetworkError(
                        f"label {lb!r} has inconsistent dims {dims[lb]} and {d}")
        bad = [lb for lb, c in counts.items() if c > 2]
        if bad:
            raise NetworkError(f"labels appear more than twice: {bad}")
        self.dims = dims
        self.open_labels = tuple(lb for t in self.tensors for lb in t.labels
                                 if counts[lb] == 1)
        self._signature = tuple((t.labels, t.shape) for t in self.tensors)

    def __len__(self):
        return len(self.tensors)

    @property
    def max_tensor_size(self) -> int:
        return max((t.size for t in self.tensors), default=0)

    @property
    def dtype(self):
        return np.result_type(*[t.dtype for t in self.tensors])

    def signature(self):
        return self._signature


def plan_path(shapes: Sequence[dict[str, int]]) -> ContractionPath:
    """Greedy pairwise contraction order for tensors given as label->dim maps.

    At each step the pair of connected tensors whose contraction gives the
    smallest result is taken; ties go to fewer flops and then to the
    lexicographically smallest id pair. If no remaining tensors share a
    label, the two smallest are combined by outer product.
    """
    nodes = {i: dict(s) for i, s in enumerate(shapes)}
    next_id = len(nodes)
    steps = []
    peak = 0
    total_flops = 0
    if len(nodes) == 1:
        only = nodes[0]
        return ContractionPath((), math.prod(only.values()), 0, tuple(only))

    while len(nodes) > 1:
        ids = sorted(nodes)
        best = None
        for i, j in itertools.combinations(ids, 2):
            a, b = nodes[i], nodes[j]
            if not any(lb in b for lb in a):
                continue
            res = _pair_result(a, b)
            size = math.prod(res.values())
            flops = math.prod({**a, **b}.values())
            key = (size, flops, (i, j))
            if best is None or key < best[0]:
                best = (key, i, j, res)
        if best is None:
            i, j = sorted(ids, key=lambda x: (math.prod(nodes[x].values()), x))[:2]
            i, j = min(i, j), max(i, j)
            res = _pair_result(nodes[i], nodes[j])
            size = math.prod(res.values())
            flops = size
        else:
            (size, flops, _), i, j, res = best
        steps.append((i, j))
        peak = max(peak, size)
        total_flops += flops
        del nodes[i], nodes[j]
        nodes[next_id] = res
        next_id += 1

    (final,) = nodes.values()
    return ContractionPath(tuple(steps), peak, total_flops, tuple(final))


def _pair_result(a: dict, b: dict) -> dict:
    out = {lb: d for lb, d in a.items() if lb not in b}
    out.update((lb, d) for lb, d in b.items() if lb not in a)
    return out


def execute_path(tensors: Sequence[Tensor], path: ContractionPath) -> Tensor:
    pool = dict(enumerate(tensors))
    nid = len(pool)
    for i, j in path.steps:
        pool[nid] = contract_pair(pool.pop(i), pool.pop(j))
        nid += 1
    (out,) = pool.values()
    return out


class CompiledPath:
    """A contraction path with every transpose and reshape worked out.

    Executing it on raw arrays skips the per-step label bookkeeping of
    :func:`contract_pair`, which dominates for small tensors. Where an
    operand is already stored as ``(free, shared)`` or ``(shared, free)`` it
    is passed to the matrix product as a (possibly transposed) view instead
    of being copied.
    """

    def __init__(self, labels: Sequence[Sequence[str]], shapes, path: ContractionPath,
                 out_labels: Sequence[str]):
        pool = {i: (tuple(lb), tuple(sh)) for i, (lb, sh) in enumerate(zip(labels, shapes))}
        nid = len(pool)
        self.steps = []
        for i, j in path.steps:
            (la, sa), (lb, sb) = pool.pop(i), pool.pop(j)
            da, db = dict(zip(la, sa)), dict(zip(lb, sb))
            fa = [x for x in la if x not in db]
            fb = [x for x in lb if x not in da]
            # take the shared order from whichever operand avoids more copies
            options = [[x for x in la if x in db], [x for x in lb if x in da]]
            shared = min(options, key=lambda sh: (_layout(la, fa, sh)[0] == "copy")
                         + (_layout(lb, sh, fb)[0] == "copy"))
            m = math.prod(da[x] for x in fa)
            k = math.prod(da[x] for x in shared)
            n = math.prod(db[x] for x in fb)
            prep_a = _layout(la, fa, shared) + ((m, k),)
            prep_b = _layout(lb, shared, fb) + ((k, n),)
            shape = tuple(da[x] for x in fa) + tuple(db[x] for x in fb)
            self.steps.append((i, j, prep_a, prep_b, shape))
            pool[nid] = (tuple(fa + fb), shape)
            nid += 1
        ((final, fshape),) = pool.values()
        self.out_perm = tuple(final.index(x) for x in out_labels)

    def __call__(self, arrays):
        pool = dict(enumerate(arrays))
        nid = len(pool)
        for i, j, prep_a, prep_b, shape in self.steps:
            a = _as_matrix(pool.pop(i), prep_a)
            b = _as_matrix(pool.pop(j), prep_b)
            pool[nid] = (a @ b).reshape(shape)
            nid += 1
        (out,) = pool.values()
        return out.transpose(self.out_perm)


def _layout(stored, first, second):
    """How to view an operand stored with labels ``stored`` as a matrix with
    rows ``first`` and columns ``second``."""
    want = tuple(first) + tuple(second)
    if tuple(stored) == want:
        return ("plain", None)
    if tuple(stored) == tuple(second) + tuple(first):
        return ("transposed", None)
    return ("copy", tuple(stored.index(x) for x in want))


def _as_matrix(arr, prep):
    how, perm, (rows, cols) = prep
    if how == "plain":
        return arr.reshape(rows, cols)
    if how == "transposed":
        return arr.reshape(cols, rows).T
    return arr.transpose(perm).reshape(rows, cols)


class TnOperator:
    """Tensor network viewed as a matrix from ``right_labels`` to
    ``left_labels``.

    Parameters
    ----------
    tensors : sequence of Tensor or TensorNetwork
    left_labels, right_labels : sequence of str
        Disjoint orderings of the open labels. The fused row (column) index
        is row-major in ``left_labels`` (``right_labels``).
    """

    def __init__(self, tensors, left_labels: Sequence[str],
                 right_labels: Sequence[str]):
        net = tensors if isinstance(tensors, TensorNetwork) else TensorNetwork(tensors)
        self.network = net
        self.left_labels = tuple(left_labels)
        self.right_labels = tuple(right_labels)
        if set(self.left_labels) & set(self.right_labels):
            raise NetworkError("left and right labels overlap")
        if sorted(self.left_labels + self.right_labels) != sorted(net.open_labels):
            raise NetworkError(
                f"left+right labels {self.left_labels + self.right_labels} do "
                f"not match the open labels {net.open_labels}")
        self.left_dims = tuple(net.dims[lb] for lb in self.left_labels)
        self.right_dims = tuple(net.dims[lb] for lb in self.right_labels)
        self.dim_left = math.prod(self.left_dims)
        self.dim_right = math.prod(self.right_dims)
        self.dtype = net.dtype
        self._paths: dict = {}
        self._lock = threading.Lock()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim_left, self.dim_right)

    @property
    def tensors(self):
        return self.network.tensors

    def __repr__(self):
        return (f"TnOperator({self.dim_left}x{self.dim_right}, "
                f"{len(self.network)} tensors)")

    def _path_for(self, key, make_shapes):
        path = self._paths.get(key)
        if path is None:
            path = plan_path(make_shapes())
            # first writer wins; racing planners produce the same plan anyway
            with self._lock:
                path = self._paths.setdefault(key, path)
        return path

    def path(self, batch: int = 0, adjoint: bool = False) -> ContractionPath:
        """The cached plan used by matvec (or rmatvec if ``adjoint``)."""
        in_labels = self.left_labels if adjoint else self.right_labels
        in_dims = self.left_dims if adjoint else self.right_dims

        def shapes():
            probe = dict(zip(in_labels, in_dims))
            if batch:
                probe[BATCH] = batch
            return [t.dims() for t in self.tensors] + [probe]

        key = ("apply", adjoint, batch, self.network.signature())
        return self._path_for(key, shapes)

    def _compiled(self, batch: int, adjoint: bool) -> CompiledPath:
        key = ("compiled", adjoint, batch, self.network.signature())
        comp = self._paths.get(key)
        if comp is None:
            in_labels = self.left_labels if adjoint else self.right_labels
            out_labels = self.right_labels if adjoint else self.left_labels
            extra = (BATCH,) if batch else ()
            in_dims = self.left_dims if adjoint else self.right_dims
            labels = [t.labels for t in self.tensors] + [in_labels + extra]
            shapes = [t.shape for t in self.tensors] + [in_dims + ((batch,) if batch else ())]
            comp = CompiledPath(labels, shapes, self.path(batch, adjoint),
                                out_labels + extra)
            with self._lock:
                comp = self._paths.setdefault(key, comp)
        return comp

    def _apply(self, x: np.ndarray, adjoint: bool) -> np.ndarray:
        in_dims, out_dims, n_in = (
            (self.left_dims, self.right_dims, self.dim_left) if adjoint else
            (self.right_dims, self.left_dims, self.dim_right))
        x = np.asarray(x)
        batch = 0 if x.ndim == 1 else x.shape[1]
        if x.shape[0] != n_in:
            raise ValueError(f"operand has leading dim {x.shape[0]}, expected {n_in}")
        probe = x.reshape(in_dims + ((batch,) if batch else ()))
        if adjoint:
            # A^H x = conj(A^T conj(x)); the same network, read the other way
            probe = probe.conj()
        arrays = [t.data for t in self.tensors] + [probe]
        data = self._compiled(batch, adjoint)(arrays)
        if adjoint:
            data = data.conj()
        n_out = math.prod(out_dims)
        return data.reshape((n_out, batch) if batch else (n_out,))

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 1:
            raise ValueError("matvec expects a vector")
        return self._apply(v, adjoint=False)

    def rmatvec(self, v) -> np.ndarray:
        """Action of the conjugate transpose."""
        v = np.asarray(v)
        if v.ndim != 1:
            raise ValueError("rmatvec expects a vector")
        return self._apply(v, adjoint=True)

    def matmat(self, x) -> np.ndarray:
        return self._apply(np.asarray(x), adjoint=False)

    def rmatmat(self, x) -> np.ndarray:
        return self._apply(np.asarray(x), adjoint=True)

    def __matmul__(self, x):
        x = np.asarray(x)
        return self.matvec(x) if x.ndim == 1 else self.matmat(x)

    def to_dense(self, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
        """Contract the whole network into a ``(dim_left, dim_right)`` array."""
        if self.dim_left * self.dim_right > cap:
            raise NetworkError(
                f"dense operator would have {self.dim_left * self.dim_right} "
                f"entries, above the cap of {cap}")
        path = self._path_for(("dense", self.network.signature()),
                              lambda: [t.dims() for t in self.tensors])
        out = execute_path(self.tensors, path)
        data = out.to_array(self.left_labels + self.right_labels)
        return data.reshape(self.dim_left, self.dim_right)

    def trace(self) -> complex:
        """Trace, by joining each left label to its right partner."""
        if self.left_dims != self.right_dims:
            raise NetworkError("trace of a non-square operator")
        ident = [Tensor(np.eye(d), (lo, ri)) for lo, ri, d in
                 zip(self.left_labels, self.right_labels, self.left_dims)]
        tensors = list(self.tensors) + ident
        path = self._path_for(("trace", self.network.signature()),
                              lambda: [t.dims() for t in tensors])
        return complex(execute_path(tensors, path).data)


class DenseOperator:
    """Wrap an explicit matrix in the operator interface."""

    def __init__(self, m):
        self.m = np.asarray(m)
        self.shape = self.m.shape
        self.dtype = self.m.dtype

    def matvec(self, v):
        return self.m @ v

    def rmatvec(self, v):
        return self.m.conj().T @ v

    matmat = matvec
    rmatmat = rmatvec

    def to_dense(self, cap: int = DEFAULT_DENSE_CAP):
        return self.m


class FunctionOperator:
    """Square operator defined by a matvec callable."""

    def __init__(self, matvec, dim: int, dtype=np.complex128):
        self._matvec = matvec
        self.shape = (dim, dim)
        self.dtype = np.dtype(dtype)

    def matvec(self, v):
        return self._matvec(v)

    def to_dense(self, cap: int = DEFAULT_DENSE_CAP):
        n = self.shape[0]
        if n * n > cap:
            raise NetworkError("dense operator above cap")
        eye = np.eye(n, dtype=self.dtype)
        return np.stack([self._matvec(eye[:, i]) for i in range(n)], axis=1)


def as_operator(x):
    if isinstance(x, np.ndarray):
        return DenseOperator(x)
    if hasattr(x, "matvec") and hasattr(x, "shape"):
        return x
    raise TypeError(f"cannot use {type(x).__name__} as a linear operator")
