"""Random game generators shared by the test modules."""

import numpy as np

from qmmw.game import QuantumGame
from qmmw.hermitian import hermitize, random_density, random_hermitian


def random_povm(rng, n, k):
    """``k`` PSD elements on ``C^n`` summing to the identity."""
    raw = []
    for _ in range(k):
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        raw.append(g @ g.conj().T)
    s = sum(raw)
    w, u = np.linalg.eigh(s)
    inv_sqrt = (u / np.sqrt(w)) @ u.conj().T
    return np.array([hermitize(inv_sqrt @ a @ inv_sqrt) for a in raw])


def random_povm_game(rng, dims=(2, 2), k=5, zero_sum=False):
    n = int(np.prod(dims))
    povm = random_povm(rng, n, k)
    pay = rng.uniform(-1, 1, size=(k, len(dims)))
    if zero_sum:
        pay[:, 1] = -pay[:, 0]
    return QuantumGame.from_povm(dims, povm, pay, zero_sum=zero_sum)


def random_observable_game(rng, dims=(2, 2), zero_sum=False):
    n = int(np.prod(dims))
    ws = [random_hermitian(rng, n) for _ in dims]
    if zero_sum:
        ws[1] = -ws[0]
    return QuantumGame.from_observables(dims, ws, zero_sum=zero_sum)


def random_profile(rng, dims):
    return [random_density(rng, d, rank=int(rng.integers(1, d + 1))) for d in dims]
