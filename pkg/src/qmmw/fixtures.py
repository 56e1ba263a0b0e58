"""Builtin two-qubit test games.

All are computational-basis PVM games on ``C^2 (x) C^2``, so they work with
every estimator including the bandit one.
"""

import numpy as np

from .game import QuantumGame
from .hermitian import ValidationError

PAULI_Z = np.diag([1.0, -1.0]).astype(np.complex128)
KET0 = np.diag([1.0, 0.0]).astype(np.complex128)
KET1 = np.diag([0.0, 1.0]).astype(np.complex128)


def computational_pvm(dims):
    """Rank-one projectors onto the product computational basis."""
    n = int(np.prod(dims))
    pvm = np.zeros((n, n, n), dtype=np.complex128)
    pvm[np.arange(n), np.arange(n), np.arange(n)] = 1.0
    return pvm


def _zero_sum_pvm(u1, name, equilibrium=None):
    u1 = np.asarray(u1, dtype=float)
    pay = np.stack([u1, -u1], axis=1)
    return QuantumGame.from_povm((2, 2), computational_pvm((2, 2)), pay, zero_sum=True,
                                 name=name, equilibrium=equilibrium)


def matching_pennies():
    """``W_1 = Z (x) Z``, zero-sum; the unique equilibrium is ``(I/2, I/2)``."""
    half = np.eye(2, dtype=np.complex128) / 2
    return _zero_sum_pvm([1.0, -1.0, -1.0, 1.0], "matching-pennies", (half, half))


def skewed_pennies():
    """``W_1 = Z(x)Z + 0.5 Z(x)I - 0.25 I(x)Z``, zero-sum.

    In Bloch coordinates ``L = z1 z2 + 0.5 z1 - 0.25 z2``; the saddle point
    is ``z1 = 0.25, z2 = -0.5``, i.e. ``X_1 = diag(5/8, 3/8)`` and
    ``X_2 = diag(1/4, 3/4)``, away from the uniform starting point.
    """
    # diagonal of W_1 in the |00>, |01>, |10>, |11> order
    u1 = [1.0 + 0.5 - 0.25, -1.0 + 0.5 + 0.25, -1.0 - 0.5 - 0.25, 1.0 - 0.5 + 0.25]
    eq = (np.diag([0.625, 0.375]).astype(np.complex128),
          np.diag([0.25, 0.75]).astype(np.complex128))
    return _zero_sum_pvm(u1, "skewed-pennies", eq)


def dominant():
    """General-sum game where ``|0>`` strictly dominates for both players.

    ``u_1(a, b) = 0.75 (-1)^a + 0.25 (-1)^(a+b)`` and symmetrically for
    player 2, so the pure profile ``(|0><0|, |0><0|)`` is a strict,
    globally variationally stable equilibrium.
    """
    u = np.zeros((4, 2))
    for a in range(2):
        for b in range(2):
            u[2 * a + b, 0] = 0.75 * (-1) ** a + 0.25 * (-1) ** (a + b)
            u[2 * a + b, 1] = 0.75 * (-1) ** b + 0.25 * (-1) ** (a + b)
    return QuantumGame.from_povm((2, 2), computational_pvm((2, 2)), u, name="dominant",
                                 equilibrium=(KET0, KET0))


def constant(c=1.0):
    """Single-outcome game with ``P = I`` and payoff ``c`` for both players."""
    pvm = np.eye(4, dtype=np.complex128)[None]
    return QuantumGame.from_povm((2, 2), pvm, [[c, c]], name="constant")


FIXTURES = {
    "matching-pennies": matching_pennies,
    "skewed-pennies": skewed_pennies,
    "dominant": dominant,
    "constant": constant,
}


def get_fixture(name):
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ValidationError(f"unknown builtin game {name!r}; choose from {sorted(FIXTURES)}") from None
