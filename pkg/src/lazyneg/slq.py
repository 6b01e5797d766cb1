"""Stochastic Lanczos quadrature for spectral sums ``Tr f(X)``.

Three pieces combine here:

* Hutchinson sampling: ``Tr f(X)`` is the mean of ``<phi|f(X)|phi>`` over
  random probes ``phi`` with zero-mean, unit-variance entries.
* Lanczos: from ``phi`` build the tridiagonal ``T_k`` using only matvecs.
* Gauss quadrature: ``<phi|f(X)|phi> ~ |phi|^2 sum_j tau_j^2 f(theta_j)``
  where ``theta_j`` are the eigenvalues of ``T_k`` and ``tau_j`` the first
  components of its eigenvectors.

The per-probe sequence of quadrature values is extrapolated by a least
squares exponential fit, and sampling stops once the standard error of the
mean is below the requested relative tolerance.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import NotHermitianError, TridiagonalMatrix, eig_sym_tridiagonal
from .network import as_operator

_MASK64 = (1 << 64) - 1
_HERMITIAN_SEED_OFFSET = 0x5EED_4E47


# ---------------------------------------------------------------------------
# spectral functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralFunction:
    """Scalar function applied to the eigenvalues of an operator.

    ``tag`` is one of ``'abs'``, ``'identity'``, ``'xlogx_neg'``
    (``-x log2 x`` with negative inputs clamped to 0), ``'exp_neg_beta'``
    (``exp(-beta x)``) or ``'square'``.
    """

    tag: str
    beta: float = 1.0

    def __post_init__(self):
        if self.tag not in _FUNCS:
            raise ValueError(f"unknown spectral function {self.tag!r}")

    def __call__(self, x):
        return _FUNCS[self.tag](np.asarray(x, dtype=np.float64), self.beta)


def _xlogx_neg(x, _):
    x = np.clip(x, 0.0, None)
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = -x[nz] * np.log2(x[nz])
    return out


_FUNCS = {
    "abs": lambda x, _: np.abs(x),
    "identity": lambda x, _: x,
    "xlogx_neg": _xlogx_neg,
    "exp_neg_beta": lambda x, b: np.exp(-b * x),
    "square": lambda x, _: x * x,
}


def spectral_function(f) -> SpectralFunction:
    return f if isinstance(f, SpectralFunction) else SpectralFunction(f)


# ---------------------------------------------------------------------------
# configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlqConfig:
    """Parameters of one SLQ run.

    ``tol`` is relative to the running mean, ``ltol`` relative to the
    per-probe estimate. ``threads`` only changes wall time. Operators of
    dimension at most ``exhaustive_dim`` are traced with the basis vectors
    as probes, which is exact and no dearer than ``n_min`` random probes;
    random probes on such small spaces take few distinct values and can
    agree by chance, faking a zero variance.
    """

    tol: float = 0.01
    ltol: float = 0.001
    n_max: int = 400
    k_max: int = 128
    seed: int = 0
    vector_kind: str = "rademacher"
    n_min: int = 10
    threads: int = 1
    exhaustive_dim: int = 16

    def __post_init__(self):
        if not (self.tol > 0 and self.ltol > 0):
            raise ValueError("tol and ltol must be positive")
        if self.n_max < 3:
            raise ValueError("n_max must be at least 3")
        if self.k_max < 2:
            raise ValueError("k_max must be at least 2")
        if self.vector_kind not in ("rademacher", "gaussian"):
            raise ValueError(f"unknown vector kind {self.vector_kind!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.exhaustive_dim < 0:
            raise ValueError("exhaustive_dim must be >= 0")


@dataclass
class TraceEstimate:
    samples: np.ndarray
    mean: float
    std_error: float
    variance: float
    n_used: int
    converged: bool
    lanczos_steps: np.ndarray = field(default_factory=lambda: np.empty(0, int))
    # mean of the per-probe quadrature error estimates; it does not average
    # out over probes, so it is kept apart from the sampling error
    quadrature_error: float = 0.0
    # True when the trace was summed over basis probes (no sampling error)
    exhaustive: bool = False

    @classmethod
    def from_samples(cls, samples, converged, steps=(), quad_errors=()):
        g = np.asarray(samples, dtype=np.float64)
        n = g.size
        var = float(g.var(ddof=1)) if n > 1 else math.inf
        q = np.asarray(quad_errors, dtype=np.float64)
        qerr = float(q.mean()) if q.size else 0.0
        return cls(g, float(g.mean()), math.sqrt(var / n), var, n, converged,
                   np.asarray(steps, dtype=int), qerr)

    @property
    def total_error(self) -> float:
        """Sampling and quadrature errors combined in quadrature."""
        return math.hypot(self.std_error, self.quadrature_error)


@dataclass
class QuadratureSeries:
    values: list
    converged_estimate: float
    estimate_error: float
    exact: bool = False


# ---------------------------------------------------------------------------
# random probes
# ---------------------------------------------------------------------------

def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for probe ``index``; same for serial and threaded runs."""
    return np.random.default_rng((int(seed) & _MASK64) ^ splitmix64(index))


def sample_vector(dim: int, rng: np.random.Generator,
                  kind: str = "rademacher") -> np.ndarray:
    """Real probe with i.i.d. zero-mean unit-variance entries (not normalised)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if kind == "rademacher":
        return rng.integers(0, 2, size=dim).astype(np.float64) * 2.0 - 1.0
    if kind == "gaussian":
        return rng.standard_normal(dim)
    raise ValueError(f"unknown vector kind {kind!r}")


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------

class LanczosState:
    """Coefficients and stored basis of a running Lanczos iteration.

    ``beta[0]`` is the norm of the starting vector; ``beta[k]`` couples
    basis vectors ``k-1`` and ``k``. ``pending`` is the next normalised basis
    vector, or None once an invariant subspace has been found. ``capacity``
    is the number of basis rows allocated up front; storage doubles beyond it.
    """

    def __init__(self, v, capacity: int = 4):
        v = np.asarray(v)
        b1 = float(np.linalg.norm(v))
        if not b1 > 0:
            raise ValueError("Lanczos needs a non-zero starting vector")
        self.alpha: list[float] = []
        self.beta: list[float] = [b1]
        self.pending = v / b1
        self.terminated = False
        self._basis = None
        self._capacity = max(int(capacity), 1)
        self._n = 0

    @property
    def k(self) -> int:
        return len(self.alpha)

    @property
    def basis(self) -> np.ndarray:
        if self._basis is None:
            return np.empty((0, self.pending.size))
        return self._basis[:self._n]

    def _push(self, phi):
        if self._basis is None:
            self._basis = np.empty((self._capacity, phi.size), dtype=phi.dtype)
        elif self._n == self._basis.shape[0]:
            grown = np.empty((2 * self._n, phi.size),
                             dtype=np.result_type(self._basis, phi))
            grown[:self._n] = self._basis
            self._basis = grown
        if not np.can_cast(phi.dtype, self._basis.dtype):
            self._basis = self._basis.astype(np.result_type(self._basis, phi))
        self._basis[self._n] = phi
        self._n += 1

    def tridiagonal(self) -> TridiagonalMatrix:
        return TridiagonalMatrix(self.alpha, self.beta[1:self.k])

    def max_orthogonality_error(self) -> float:
        b = self.basis
        g = b.conj() @ b.T
        return float(np.abs(g - np.eye(len(b))).max(initial=0.0))


def lanczos_step(op, state: LanczosState, reorthogonalize: bool = True,
                 breakdown: float = 1e-13) -> LanczosState:
    """Advance ``state`` by one Lanczos iteration (in place).

    Computes ``v = X phi_k - beta_k phi_{k-1}``, ``alpha_k = <v|phi_k>``,
    ``v -= alpha_k phi_k``, then one classical Gram-Schmidt pass against every
    stored basis vector, and ``beta_{k+1} = |v|``. If ``beta_{k+1}`` drops
    below ``breakdown`` times the largest coefficient seen so far the Krylov
    space is invariant and ``state.terminated`` is set.
    """
    if state.terminated:
        raise RuntimeError("Lanczos iteration already terminated")
    phi = state.pending
    w = op.matvec(phi)
    if state.k > 0:
        w = w - state.beta[-1] * state.basis[-1]
    a = float(np.vdot(phi, w).real)
    w = w - a * phi
    state._push(phi)
    state.alpha.append(a)
    if reorthogonalize:
        basis = state.basis
        # <phi_j|w> for all j; conjugating w avoids copying the basis
        coef = (w.conj() @ basis.T).conj()
        w = w - coef @ basis
    b = float(np.linalg.norm(w))
    state.beta.append(b)
    scale = max(max(abs(x) for x in state.alpha), max(state.beta[1:]))
    if b <= breakdown * scale or b == 0.0:
        state.terminated = True
        state.pending = None
    else:
        state.pending = w / b
    return state


def lanczos(op, v, k_max: int, reorthogonalize: bool = True) -> LanczosState:
    """Run up to ``k_max`` Lanczos steps from ``v``."""
    op = as_operator(op)
    state = LanczosState(v)
    for _ in range(min(k_max, op.shape[0])):
        lanczos_step(op, state, reorthogonalize)
        if state.terminated:
            break
    return state


# ---------------------------------------------------------------------------
# quadrature and extrapolation
# ---------------------------------------------------------------------------

def quadrature_value(t: TridiagonalMatrix, f, norm_sq: float) -> float:
    """``norm_sq * sum_j tau_j^2 f(theta_j)`` for the Gauss rule of ``t``."""
    f = spectral_function(f)
    theta, tau = eig_sym_tridiagonal(t)
    return float(norm_sq * np.dot(tau * tau, f(theta)))


@dataclass
class ExponentialFit:
    estimate: float
    error: float
    ratio: float
    decaying: bool


def fit_exponential(values, window: int = 20) -> ExponentialFit:
    """Fit ``F_j ~ a + b r^j`` to the tail of a convergent sequence.

    ``r`` comes from a straight-line fit of ``log|F_{j+1} - F_j|`` against
    ``j`` (its sign from whether successive differences alternate), then
    ``a, b`` from linear least squares at fixed ``r``. The reported error
    combines the residual standard error on ``a`` with the uncertainty of
    the extrapolated tail implied by the error on ``r``.
    """
    f = np.asarray(values, dtype=np.float64)[-window:]
    last = float(f[-1])
    if f.size < 2:
        return ExponentialFit(last, math.inf, math.nan, False)
    d = np.diff(f)
    flat = 1e-14 * max(abs(last), 1e-300)
    if np.all(np.abs(d[-2:]) <= flat):
        return ExponentialFit(last, flat, 0.0, True)
    if d.size < 3:
        return ExponentialFit(last, abs(d[-1]), math.nan, False)

    x = np.arange(d.size, dtype=np.float64)
    y = np.log(np.maximum(np.abs(d), 1e-300))
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xm
    s_slope = math.sqrt(float(resid @ resid) / (d.size - 2) / sxx) if d.size > 2 else math.inf
    rabs = math.exp(slope)
    if not rabs < 1.0:
        return ExponentialFit(last, abs(d[-1]), rabs, False)

    flips = np.count_nonzero(np.sign(d[1:]) != np.sign(d[:-1]))
    r = -rabs if flips > (d.size - 1) / 2 else rabs

    j = np.arange(f.size, dtype=np.float64)
    design = np.stack([np.ones_like(j), r ** j], axis=1)
    coef, *_ = np.linalg.lstsq(design, f, rcond=None)
    a = float(coef[0])
    res = f - design @ coef
    dof = f.size - 2
    if dof > 0:
        s2 = float(res @ res) / dof
        try:
            cov = s2 * np.linalg.inv(design.T @ design)
            s_a = math.sqrt(max(cov[0, 0], 0.0))
        except np.linalg.LinAlgError:
            s_a = math.inf
    else:
        s_a = math.inf
    s_tail = abs(d[-1]) / (1.0 - r) ** 2 * rabs * s_slope
    err = math.hypot(s_a, s_tail)
    if not math.isfinite(a):
        return ExponentialFit(last, abs(d[-1]), r, False)
    return ExponentialFit(a, err, r, True)


def lanczos_estimate(values, window: int = 20) -> tuple[float, float]:
    """Extrapolated limit of a quadrature sequence and its 1-sigma error.

    If the sequence is not decaying the last value is returned with the last
    increment as a conservative error.
    """
    fit = fit_exponential(values, window)
    return fit.estimate, fit.error


def bilinear_form(op, v, f, k_max: int = 128, ltol: float = 1e-3
                  ) -> tuple[QuadratureSeries, int]:
    """Estimate ``<v|f(X)|v>`` by Lanczos quadrature.

    Returns the quadrature series with its extrapolated value, and the
    number of Lanczos steps taken.
    """
    f = spectral_function(f)
    k_cap = min(k_max, op.shape[0])
    state = LanczosState(v, capacity=k_cap)
    norm_sq = state.beta[0] ** 2
    values = []
    if k_cap == op.shape[0]:
        # the Krylov space can reach the whole space: run to the end and
        # evaluate the (then exact) Gauss rule once
        while state.k < k_cap and not state.terminated:
            lanczos_step(op, state)
        value = quadrature_value(state.tridiagonal(), f, norm_sq)
        return QuadratureSeries([value], value, 0.0, exact=True), state.k
    fit = None
    for k in range(1, k_cap + 1):
        lanczos_step(op, state)
        values.append(quadrature_value(state.tridiagonal(), f, norm_sq))
        if state.terminated:
            return QuadratureSeries(values, values[-1], 0.0, exact=True), k
        if k >= 3:
            fit = fit_exponential(values)
            if fit.decaying and fit.error < ltol * abs(fit.estimate):
                return QuadratureSeries(values, fit.estimate, fit.error), k
    if fit is not None and fit.decaying:
        return QuadratureSeries(values, fit.estimate, fit.error), k_cap
    err = abs(values[-1] - values[-2]) if len(values) > 1 else math.inf
    return QuadratureSeries(values, values[-1], err), k_cap


# ---------------------------------------------------------------------------
# Hutchinson loop
# ---------------------------------------------------------------------------

def check_hermitian(op, seed: int = 0, rtol: float = 1e-8) -> float:
    """Probabilistic test that ``<u|X v> == conj(<v|X u>)``.

    Returns the relative asymmetry; raises NotHermitianError above ``rtol``.
    """
    rng = sample_rng(seed, _HERMITIAN_SEED_OFFSET)
    n = op.shape[0]
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    xu, xv = op.matvec(u), op.matvec(v)
    lhs = np.vdot(u, xv)
    rhs = np.conj(np.vdot(v, xu))
    scale = np.linalg.norm(u) * np.linalg.norm(xv) + np.linalg.norm(v) * np.linalg.norm(xu)
    rel = float(abs(lhs - rhs) / scale) if scale > 0 else 0.0
    if rel > rtol:
        raise NotHermitianError(f"operator fails Hermiticity check: {rel:.2e}")
    return rel


def _one_sample(op, f, cfg: SlqConfig, index: int):
    rng = sample_rng(cfg.seed, index)
    v = sample_vector(op.shape[0], rng, cfg.vector_kind)
    series, steps = bilinear_form(op, v, f, cfg.k_max, cfg.ltol)
    return series.converged_estimate, steps, series.estimate_error


def slq_trace(op, f, cfg: SlqConfig | None = None, check: bool = True
              ) -> TraceEstimate:
    """Estimate ``Tr f(X)`` for a Hermitian operator ``X``.

    Probes are drawn until the standard error of the mean is below
    ``cfg.tol * |mean|`` with at least ``cfg.n_min`` samples, or until
    ``cfg.n_max`` samples. Probe ``i`` always uses the same random stream,
    and the stopping rule is applied to samples in index order, so the
    result does not depend on ``cfg.threads``.
    """
    cfg = cfg or SlqConfig()
    op = as_operator(op)
    if op.shape[0] != op.shape[1]:
        raise ValueError(f"SLQ needs a square operator, got {op.shape}")
    f = spectral_function(f)
    if check:
        check_hermitian(op, cfg.seed)
    if op.shape[0] <= cfg.exhaustive_dim:
        return _exhaustive_trace(op, f, cfg)

    samples: list[float] = []
    steps: list[int] = []
    qerrs: list[float] = []
    converged = False
    batch = cfg.threads
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        index = 0
        while index < cfg.n_max and not converged:
            idx = range(index, min(index + batch, cfg.n_max))
            if pool is None:
                results = [_one_sample(op, f, cfg, i) for i in idx]
            else:
                results = list(pool.map(lambda i: _one_sample(op, f, cfg, i), idx))
            for g, k, q in results:
                samples.append(g)
                steps.append(k)
                qerrs.append(q)
                if len(samples) >= max(cfg.n_min, 2) and _hutchinson_converged(samples, cfg.tol):
                    converged = True
                    break
            index += len(idx)
    finally:
        if pool is not None:
            pool.shutdown()
    return TraceEstimate.from_samples(samples, converged, steps, qerrs)


def _exhaustive_trace(op, f, cfg: SlqConfig) -> TraceEstimate:
    n = op.shape[0]
    diag, steps, qerr = [], [], 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        series, k = bilinear_form(op, e, f, cfg.k_max, cfg.ltol)
        diag.append(series.converged_estimate)
        steps.append(k)
        qerr += series.estimate_error
    g = np.asarray(diag)
    return TraceEstimate(g, float(g.sum()), 0.0, 0.0, n, True,
                         np.asarray(steps, dtype=int), qerr, exhaustive=True)


def _hutchinson_converged(samples, tol) -> bool:
    g = np.asarray(samples)
    se = math.sqrt(g.var(ddof=1) / g.size)
    return se < tol * abs(g.mean())
