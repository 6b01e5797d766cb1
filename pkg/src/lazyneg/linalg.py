"""Dense decompositions used throughout the package.

Full SVD and the dense Hermitian eigensolver are thin checked wrappers over
LAPACK (via numpy). The symmetric tridiagonal eigensolver that drives the
Lanczos quadrature, the randomized truncated SVD and the semidefinite
Cholesky with its fallback ladder are implemented here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EPS = np.finfo(np.float64).eps


class DecompositionError(RuntimeError):
    """A factorisation failed to converge."""


class NotHermitianError(ValueError):
    """Input that must be Hermitian is not (to the stated tolerance)."""


@dataclass
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    # set when rank_cap stopped a truncated SVD before the cutoff was reached
    hit_rank_cap: bool = False

    @property
    def rank(self) -> int:
        return self.s.size

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vh


@dataclass
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix, ``alpha`` on the diagonal and ``beta``
    on the first off-diagonal (one shorter than ``alpha``)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64).ravel()
        self.beta = np.asarray(self.beta, dtype=np.float64).ravel()
        if self.beta.size != max(self.alpha.size - 1, 0):
            raise ValueError(
                f"{self.alpha.size} diagonal entries need {self.alpha.size - 1} "
                f"off-diagonal entries, got {self.beta.size}")

    @property
    def size(self) -> int:
        return self.alpha.size

    def to_dense(self) -> np.ndarray:
        return (np.diag(self.alpha) + np.diag(self.beta, 1)
                + np.diag(self.beta, -1))


@dataclass
class CholeskyResult:
    factor: np.ndarray
    # one of 'cholesky', 'jitter', 'eigen'
    method: str
    jitter: float = 0.0
    notes: list = field(default_factory=list)


def _check_hermitian(m: np.ndarray, rtol: float, what: str):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotHermitianError(f"{what}: expected a square matrix, got {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), np.finfo(float).tiny)
    asym = np.abs(m - m.conj().T).max(initial=0.0)
    if asym > rtol * scale:
        raise NotHermitianError(
            f"{what}: relative asymmetry {asym / scale:.2e} exceeds {rtol:.0e}")


def svd(m) -> SvdResult:
    """Thin SVD with singular values in descending order."""
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input has non-finite entries")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower QR-iteration driver works
        try:
            import scipy.linalg
            u, s, vh = scipy.linalg.svd(m, full_matrices=False,
                                        lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(str(exc)) from exc
    return SvdResult(u, s, vh)


def eig_hermitian_dense(m, check: bool = True):
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix."""
    m = np.asarray(m)
    if check:
        _check_hermitian(m, 1e-10, "eig_hermitian_dense")
    try:
        return np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(str(exc)) from exc


def eigvals_hermitian_dense(m, check: bool = True) -> np.ndarray:
    m = np.asarray(m)
    if check:
        _check_hermitian(m, 1e-10, "eigvals_hermitian_dense")
    try:
        return np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(str(exc)) from exc


def eig_sym_tridiagonal(t: TridiagonalMatrix, vectors: bool = False,
                        max_iter: int = 60):
    """Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.

    Parameters
    ----------
    t : TridiagonalMatrix
    vectors : bool, optional
        If False (default) only the first component of each normalised
        eigenvector is accumulated, which is all Gauss quadrature needs and
        keeps the cost at O(k^2). If True, the full eigenvector matrix is
        returned instead.
    max_iter : int, optional
        QL sweeps allowed per eigenvalue.

    Returns
    -------
    theta : ndarray
        Eigenvalues, ascending.
    tau : ndarray
        ``tau[j] = <e_1|w_j>`` (or the ``(k, k)`` matrix of eigenvectors as
        columns when ``vectors=True``).
    """
    n = t.size
    if n == 0:
        return np.empty(0), (np.empty((0, 0)) if vectors else np.empty(0))
    d = np.array(t.alpha, dtype=np.float64)
    e = np.zeros(n)
    e[:n - 1] = t.beta
    # rows of z are the eigenvector components being tracked
    z = np.eye(n) if vectors else np.eye(1, n)
    failed = _tql(d, e, z, max_iter, _EPS)
    if failed >= 0:
        raise DecompositionError(
            f"tridiagonal QL did not converge for eigenvalue {failed}")
    order = np.argsort(d, kind="stable")
    if vectors:
        return d[order], z[:, order]
    return d[order], z[0, order]


def _tql_py(d, e, z, max_iter, eps):
    """Implicit-shift QL on ``d`` (diagonal) and ``e`` (off-diagonal, last
    entry 0), in place. Rotations are applied to the columns of ``z``.
    Returns -1 on success or the index of the eigenvalue that failed."""
    n = d.shape[0]
    rows = z.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(rows):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


try:  # the QL sweep is scalar code; compile it when numba is available
    from numba import njit as _njit
    _tql = _njit(cache=True, nogil=True)(_tql_py)
except ImportError:  # pragma: no cover
    _tql = _tql_py


def cholesky_psd(m, jitter: float = 1e-14, max_jitter: float = 1e-10,
                 rtol: float = 1e-8) -> CholeskyResult:
    """Factor a Hermitian positive semidefinite matrix as ``L @ L^H``.

    Plain Cholesky is tried first. If a pivot fails, the diagonal is shifted
    by ``jitter * tr(m) / n`` with ``jitter`` escalating by decades up to
    ``max_jitter``. If that still fails, or the reconstruction misses
    ``rtol``, the factor is taken as ``V sqrt(max(lambda, 0))`` from a dense
    eigendecomposition, which is not triangular but satisfies the same
    product identity.
    """
    m = np.asarray(m)
    _check_hermitian(m, 1e-10, "cholesky_psd")
    m = 0.5 * (m + m.conj().T)
    n = m.shape[0]
    norm = np.linalg.norm(m)
    notes = []

    def _ok(fac):
        return np.linalg.norm(fac @ fac.conj().T - m) <= rtol * max(norm, 1e-300)

    try:
        fac = np.linalg.cholesky(m)
        if _ok(fac):
            return CholeskyResult(fac, "cholesky")
        notes.append("cholesky reconstruction above tolerance")
    except np.linalg.LinAlgError:
        notes.append("cholesky pivot failure")

    shift_unit = max(np.trace(m).real / n, 0.0)
    j = jitter
    while j <= max_jitter * (1 + 1e-9) and shift_unit > 0:
        try:
            fac = np.linalg.cholesky(m + (j * shift_unit) * np.eye(n))
            if _ok(fac):
                return CholeskyResult(fac, "jitter", jitter=j, notes=notes)
        except np.linalg.LinAlgError:
            pass
        j *= 10.0
    notes.append("jitter ladder exhausted")

    lam, v = eig_hermitian_dense(m, check=False)
    fac = v * np.sqrt(np.clip(lam, 0.0, None))
    return CholeskyResult(fac, "eigen", notes=notes)


def _as_matmat(op):
    if isinstance(op, np.ndarray):
        return (lambda x: op @ x), (lambda x: op.conj().T @ x), op.shape, op.dtype
    return op.matmat, op.rmatmat, op.shape, op.dtype


def truncated_svd(op, cutoff: float = 1e-10, rank_cap: int | None = None,
                  oversample: int = 10, n_power: int = 2, block: int = 16,
                  seed: int = 0) -> SvdResult:
    """Low-rank SVD of an implicit operator by randomized range finding.

    Only ``op.matmat`` and ``op.rmatmat`` (or a plain array) are used. The
    sketch size starts at ``block + oversample`` and doubles until a sketched
    singular value falls below ``cutoff * s_max`` or ``rank_cap`` is reached.
    Each sketch is refined with ``n_power`` power iterations, re-orthogonalised
    at every half step.

    Singular values below ``cutoff * s_max`` are dropped and at most
    ``rank_cap`` are kept. If the cap binds while the smallest kept value is
    still above the cutoff, ``hit_rank_cap`` is set on the result.
    """
    matmat, rmatmat, (nrow, ncol), dtype = _as_matmat(op)
    full = min(nrow, ncol)
    cap = full if rank_cap is None else max(1, min(rank_cap, full))
    rng = np.random.default_rng(seed)
    cplx = np.issubdtype(np.dtype(dtype), np.complexfloating)

    k = min(cap, block)
    while True:
        width = min(k + oversample, full)
        omega = rng.standard_normal((ncol, width))
        if cplx:
            omega = omega + 1j * rng.standard_normal((ncol, width))
        q, _ = np.linalg.qr(matmat(omega))
        for _ in range(n_power):
            w, _ = np.linalg.qr(rmatmat(q))
            q, _ = np.linalg.qr(matmat(w))
        b = rmatmat(q).conj().T
        small = svd(b)
        s = small.s
        smax = s[0] if s.size else 0.0
        above = int(np.count_nonzero(s >= cutoff * smax)) if smax > 0 else 0
        if width >= full or above < width:
            break
        if k >= cap:
            break
        k = min(2 * k, cap)

    keep = max(1, min(above, cap))
    hit_cap = above > cap or (keep == cap and width < full and above >= width)
    u = q @ small.u[:, :keep]
    return SvdResult(u, s[:keep].copy(), small.vh[:keep], hit_rank_cap=hit_cap)
