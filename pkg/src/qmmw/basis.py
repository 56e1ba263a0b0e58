"""Orthonormal basis of traceless Hermitian matrices and feasible sampling."""

import math
from dataclasses import dataclass, field

import numpy as np

from .hermitian import ScheduleError, ValidationError, as_density


@dataclass(frozen=True)
class TangentDirection:
    """A (signed) unit-norm traceless Hermitian direction."""

    matrix: np.ndarray
    index: int
    sign: int = 1


@dataclass(frozen=True)
class BasisSet:
    """The ``d**2 - 1`` basis elements, stacked as ``elements[a]``.

    Order: diagonal family (j = 1..d-1), then symmetric off-diagonal
    pairs (k, l) lexicographic, then antisymmetric pairs in the same order.
    """

    dim: int
    elements: np.ndarray = field(repr=False)

    def __len__(self):
        return self.elements.shape[0]

    def __getitem__(self, a):
        return self.elements[a]

    @property
    def size(self):
        return self.elements.shape[0]


def build_basis(d):
    """Construct the orthonormal tangent basis for ``d x d`` Hermitian matrices."""
    d = int(d)
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    elems = []
    for j in range(1, d):
        m = np.zeros((d, d), dtype=np.complex128)
        m[np.arange(j), np.arange(j)] = 1.0
        m[j, j] = -j
        elems.append(m / math.sqrt(j * (j + 1)))
    pairs = [(k, l) for k in range(d) for l in range(k + 1, d)]
    for k, l in pairs:
        m = np.zeros((d, d), dtype=np.complex128)
        m[k, l] = m[l, k] = 1.0 / math.sqrt(2.0)
        elems.append(m)
    for k, l in pairs:
        m = np.zeros((d, d), dtype=np.complex128)
        m[k, l] = 1j / math.sqrt(2.0)
        m[l, k] = -1j / math.sqrt(2.0)
        elems.append(m)
    arr = np.array(elems, dtype=np.complex128).reshape(len(elems), d, d)
    arr.setflags(write=False)
    return BasisSet(d, arr)


@dataclass(frozen=True)
class SafetyParams:
    """Reference point ``R = I/d`` and safety radius ``r``."""

    reference: np.ndarray = field(repr=False)
    radius: float

    @property
    def dim(self):
        return self.reference.shape[0]


def safety_radius(d):
    return min(1.0 / math.sqrt(d * (d - 1)), math.sqrt(2.0) / d)


def safety_params(d):
    d = int(d)
    if d < 2:
        raise ValidationError(f"safety parameters need d >= 2, got {d}")
    ref = np.eye(d, dtype=np.complex128) / d
    ref.setflags(write=False)
    return SafetyParams(ref, safety_radius(d))


def pivot(x, delta, params):
    """Move ``x`` toward the reference so that ``pivot +/- delta W`` stays feasible.

    ``delta = 0`` returns ``x`` unchanged.
    """
    delta = float(delta)
    if not 0.0 <= delta < params.radius:
        raise ScheduleError(f"delta={delta!r} outside [0, r={params.radius!r})")
    x = as_density(x)
    if delta == 0.0:
        return x
    return x + (delta / params.radius) * (params.reference - x)


def sample_direction(rng, basis, signed=True):
    """Draw a basis direction uniformly.

    With ``signed=True`` the draw is uniform over the ``2 (d**2 - 1)``
    signed elements; otherwise the sign is fixed to +1.
    """
    if len(basis) == 0:
        raise ValidationError("cannot sample from an empty basis (d = 1)")
    a = int(rng.integers(len(basis)))
    s = int(rng.choice((-1, 1))) if signed else 1
    return TangentDirection(s * basis[a], a, s)
