import numpy as np
import pytest

from lazyneg.pts import PureState


def bell_state() -> PureState:
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    return PureState.from_vector(v, 2)


def product_state(L: int) -> PureState:
    v = np.zeros(2**L, dtype=complex)
    v[0] = 1.0
    return PureState.from_vector(v, L)


def loop_partial_transpose(rho: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    """rho^{T_B}[ab, a'b'] = rho[ab', a'b], written out element by element."""
    out = np.zeros_like(rho)
    for a in range(d_a):
        for b in range(d_b):
            for ap in range(d_a):
                for bp in range(d_b):
                    out[a * d_b + b, ap * d_b + bp] = rho[a * d_b + bp, ap * d_b + b]
    return out


def random_hermitian(n: int, rng) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
