"""Dense tensors with labelled indices.

A :class:`Tensor` pairs a numpy array with one string label per axis. Two
tensors contract over every label they share; all other labels survive in
the result. Contraction is done by fusing the free and shared axes into
matrices and calling a single GEMM.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

_DEFAULT_DTYPE = np.complex128


class ContractionError(ValueError):
    """Raised when two tensors disagree on the dimension of a shared label."""


def set_default_dtype(dtype) -> None:
    """Switch the storage type used for new tensors.

    Only ``complex128`` and ``complex64`` are accepted. Everything in the test
    suite runs in double precision.
    """
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.complex128, np.complex64):
        raise ValueError(f"unsupported default dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@dataclass(frozen=True)
class Index:
    label: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"index {self.label!r} has non-positive dim {self.dim}")


class Tensor:
    """Numeric array with a label for every axis.

    Parameters
    ----------
    data : array_like
        The array. Real input is kept real so that real networks stay cheap;
        anything else is cast to the default complex type.
    labels : sequence of str
        One distinct label per axis of ``data``.
    """

    __slots__ = ("data", "labels")

    def __init__(self, data, labels: Sequence[str]):
        data = np.asarray(data)
        if not (np.issubdtype(data.dtype, np.floating)
                or np.issubdtype(data.dtype, np.complexfloating)):
            data = data.astype(_DEFAULT_DTYPE)
        labels = tuple(labels)
        if data.ndim != len(labels):
            raise ValueError(
                f"{data.ndim}-dimensional data given {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        self.data = data
        self.labels = labels

    @property
    def indices(self) -> tuple[Index, ...]:
        return tuple(Index(lb, d) for lb, d in zip(self.labels, self.data.shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def dim(self, label: str) -> int:
        return self.data.shape[self.labels.index(label)]

    def dims(self) -> dict[str, int]:
        return dict(zip(self.labels, self.data.shape))

    def transpose(self, *labels: str) -> "Tensor":
        """Return a copy with axes reordered to ``labels``."""
        if sorted(labels) != sorted(self.labels):
            raise ValueError(f"{labels} is not a permutation of {self.labels}")
        perm = [self.labels.index(lb) for lb in labels]
        return Tensor(self.data.transpose(perm), labels)

    def to_array(self, labels: Sequence[str] | None = None) -> np.ndarray:
        if labels is None:
            return self.data
        return self.transpose(*labels).data

    def __repr__(self):
        inds = ", ".join(f"{lb}:{d}" for lb, d in zip(self.labels, self.shape))
        return f"Tensor([{inds}], dtype={self.dtype})"

    def __mul__(self, other):
        return Tensor(self.data * other, self.labels)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return contract_pair(self, other)


def contract_pair(a: Tensor, b: Tensor) -> Tensor:
    """Sum over every label shared by ``a`` and ``b``.

    The result carries the free labels of ``a`` followed by those of ``b``.
    """
    shared = [lb for lb in a.labels if lb in b.labels]
    free_a = [lb for lb in a.labels if lb not in shared]
    free_b = [lb for lb in b.labels if lb not in shared]
    da, db = a.dims(), b.dims()
    for lb in shared:
        if da[lb] != db[lb]:
            raise ContractionError(
                f"label {lb!r} has dim {da[lb]} on one side and {db[lb]} on the other")

    m = int(np.prod([da[lb] for lb in free_a], dtype=np.int64))
    k = int(np.prod([da[lb] for lb in shared], dtype=np.int64))
    n = int(np.prod([db[lb] for lb in free_b], dtype=np.int64))

    ax = a.data.transpose([a.labels.index(lb) for lb in free_a + shared])
    bx = b.data.transpose([b.labels.index(lb) for lb in shared + free_b])
    out = ax.reshape(m, k) @ bx.reshape(k, n)
    shape = [da[lb] for lb in free_a] + [db[lb] for lb in free_b]
    return Tensor(out.reshape(shape), free_a + free_b)


def group_indices(t: Tensor, groups: Sequence[Sequence[str]],
                  names: Sequence[str] | None = None) -> Tensor:
    """Fuse each group of labels into a single index.

    Grouped axes are first made adjacent, in the order given; ungrouped axes
    keep their relative order and come after the fused ones. The fused index
    is row-major in its members, so fusing ``(i, j)`` with dims ``(2, 3)``
    gives position ``3 * i + j``.

    Parameters
    ----------
    t : Tensor
    groups : sequence of sequence of str
        Disjoint groups of existing labels.
    names : sequence of str, optional
        Labels for the fused indices. Defaults to the member labels joined by
        ``"+"``.
    """
    seen: set[str] = set()
    for g in groups:
        for lb in g:
            if lb not in t.labels:
                raise KeyError(f"unknown label {lb!r}")
            if lb in seen:
                raise ValueError(f"label {lb!r} appears in more than one group")
            seen.add(lb)
    if names is None:
        names = ["+".join(g) for g in groups]
    if len(names) != len(groups):
        raise ValueError("need one name per group")
    rest = [lb for lb in t.labels if lb not in seen]
    order = [lb for g in groups for lb in g] + rest
    dims = t.dims()
    shape = [int(np.prod([dims[lb] for lb in g], dtype=np.int64)) for g in groups]
    shape += [dims[lb] for lb in rest]
    data = t.transpose(*order).data.reshape(shape)
    return Tensor(data, list(names) + rest)


def split_index(t: Tensor, label: str, new: Sequence[Index]) -> Tensor:
    """Inverse of :func:`group_indices` for one fused index.

    ``new`` records the member labels and dims in their fused (row-major)
    order; they replace ``label`` in place.
    """
    pos = t.labels.index(label)
    dims = [ix.dim for ix in new]
    if int(np.prod(dims, dtype=np.int64)) != t.shape[pos]:
        raise ValueError(
            f"cannot split dim {t.shape[pos]} into {dims}")
    shape = t.shape[:pos] + tuple(dims) + t.shape[pos + 1:]
    labels = t.labels[:pos] + tuple(ix.label for ix in new) + t.labels[pos + 1:]
    return Tensor(t.data.reshape(shape), labels)


def relabel(t: Tensor, mapping: Mapping[str, str]) -> Tensor:
    """Rename labels; data is shared, not copied."""
    labels = tuple(mapping.get(lb, lb) for lb in t.labels)
    if len(set(labels)) != len(labels):
        raise ValueError(f"relabelling {t.labels} with {dict(mapping)} "
                         f"creates duplicate labels")
    return Tensor(t.data, labels)


def conjugate(t: Tensor) -> Tensor:
    return Tensor(t.data.conj(), t.labels)


def contract_all(tensors: Iterable[Tensor]) -> Tensor:
    """Contract a sequence of tensors left to right (no path optimisation)."""
    it = iter(tensors)
    out = next(it)
    for t in it:
        out = contract_pair(out, t)
    return out
