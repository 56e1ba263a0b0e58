"""Complex Hermitian matrix algebra.

Matrices are plain ``complex128`` numpy arrays; the ``as_*`` validators
check the invariants at module boundaries and return a canonical copy.
"""

from functools import reduce
from typing import NamedTuple

import numpy as np

from ._backend import kernels

HERMITIAN_TOL = 1e-12
DENSITY_EIG_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-10
LOG_FLOOR = 1e-300


class ValidationError(ValueError):
    """An input violates a structural invariant (shape, Hermiticity, PSD, ...)."""


class DomainError(ValueError):
    """A function was evaluated outside its domain."""


class ScheduleError(ValueError):
    """A step/radius schedule is infeasible."""


class EigenDecomposition(NamedTuple):
    """Ascending real eigenvalues and the unitary of column eigenvectors."""

    eigenvalues: np.ndarray
    unitary: np.ndarray


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


def hermiticity_residual(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def as_hermitian(a, name="matrix", tol=HERMITIAN_TOL):
    """Validate Hermiticity (entrywise, absolute) and return the symmetrized copy."""
    a = as_matrix(a, name)
    res = hermiticity_residual(a)
    if res > tol:
        raise ValidationError(f"{name} is not Hermitian (max |A - A^H| = {res:.3g})")
    return hermitize(a)


def hermitize(a):
    a = 0.5 * (a + a.conj().T)
    a[np.diag_indices_from(a)] = a.diagonal().real
    return a


def as_density(a, name="density"):
    """Validate a density matrix: Hermitian, eigenvalues >= -1e-10, unit trace."""
    a = as_hermitian(a, name)
    tr = float(np.trace(a).real)
    if abs(tr - 1.0) > DENSITY_TRACE_TOL:
        raise ValidationError(f"{name} has trace {tr!r}, expected 1")
    lo = float(eigh(a).eigenvalues[0])
    if lo < -DENSITY_EIG_TOL:
        raise ValidationError(f"{name} has negative eigenvalue {lo:.3g}")
    return a


def is_density(a, eig_tol=DENSITY_EIG_TOL):
    try:
        a = as_hermitian(a)
    except ValidationError:
        return False
    if abs(float(np.trace(a).real) - 1.0) > DENSITY_TRACE_TOL:
        return False
    return float(eigh(a).eigenvalues[0]) >= -eig_tol


def eigh(h):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    h : array_like
        Hermitian matrix; validated entrywise to 1e-12.

    Returns
    -------
    EigenDecomposition
        Ascending eigenvalues and unitary ``U`` with ``h = U diag(w) U^H``.
    """
    h = as_hermitian(h)
    w, u = kernels.eigh(h)
    return EigenDecomposition(np.asarray(w), np.asarray(u))


def _apply(dec, f):
    u = dec.unitary
    return hermitize((u * f(dec.eigenvalues)) @ u.conj().T)


def mat_exp(h):
    return _apply(eigh(h), np.exp)


def mat_log(p, floor=LOG_FLOOR):
    """Matrix logarithm of a positive definite matrix.

    Raises
    ------
    DomainError
        If any eigenvalue is at or below ``floor``.
    """
    dec = eigh(p)
    if dec.eigenvalues[0] <= floor:
        raise DomainError(f"mat_log needs eigenvalues > {floor:g}, got {dec.eigenvalues[0]:.3g}")
    return _apply(dec, np.log)


def softmax_density(y):
    """``exp(Y) / tr exp(Y)``, shifted by the top eigenvalue to avoid overflow."""
    dec = eigh(y)
    return np.asarray(kernels.softmax_from_eig(dec.eigenvalues, dec.unitary))


def log_sum_exp(w):
    """log of sum(exp(w)) for an ascending eigenvalue vector."""
    w = np.asarray(w, dtype=float)
    m = float(np.max(w))
    return m + float(np.log(np.sum(np.exp(w - m))))


def _same_shape(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def frob_inner(a, b):
    """Real part of tr(A^H B); exact for Hermitian arguments."""
    a, b = _same_shape(a, b)
    return float(np.sum(a.conj() * b).real)


def frob_norm(a):
    return float(np.sqrt(max(frob_inner(a, a), 0.0)))


def kron(a, b):
    return np.kron(np.asarray(a, dtype=np.complex128), np.asarray(b, dtype=np.complex128))


def kron_all(mats):
    return reduce(kron, mats, np.ones((1, 1), dtype=np.complex128))


def digits_table(dims):
    """Row ``a`` holds the per-player indices of product-space index ``a`` (row-major)."""
    dims = [int(d) for d in dims]
    grids = np.indices(dims).reshape(len(dims), -1).T
    return np.ascontiguousarray(grids, dtype=np.intp)


def pack_profile(profile, dims=None):
    """Stack per-player matrices into a zero-padded ``(N, dmax, dmax)`` array."""
    if dims is None:
        dims = [np.asarray(x).shape[0] for x in profile]
    dmax = max(dims)
    out = np.zeros((len(dims), dmax, dmax), dtype=np.complex128)
    for j, (x, d) in enumerate(zip(profile, dims)):
        out[j, :d, :d] = x
    return out


def partial_contraction(w, profile, i):
    """Partial gradient of ``tr(W X_1 (x) ... (x) X_N)`` with respect to ``X_i``.

    Parameters
    ----------
    w : array_like
        Hermitian matrix on the product space.
    profile : sequence of array_like
        One square matrix per player; entry ``i`` is ignored.
    i : int
        Player index.

    Returns
    -------
    numpy.ndarray
        Hermitian ``G`` with ``tr(G X_i) = tr(W X_1 (x) ... (x) X_N)``.
    """
    dims = [np.asarray(x).shape[0] for x in profile]
    w = np.asarray(w, dtype=np.complex128)
    n = int(np.prod(dims))
    if w.shape != (n, n):
        raise ValidationError(f"W has shape {w.shape}, expected {(n, n)} for dims {dims}")
    if not 0 <= i < len(dims):
        raise ValidationError(f"player index {i} out of range")
    xs = pack_profile(profile, dims)
    g = kernels.contract(np.ascontiguousarray(w), xs, dims, digits_table(dims), i)
    return np.asarray(g)


def random_density(rng, d, rank=None):
    """Random density matrix ``G G^H / tr(G G^H)`` with complex Gaussian ``G`` (d x rank)."""
    rank = d if rank is None else int(rank)
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return hermitize(m / np.trace(m).real)


def random_hermitian(rng, d, scale=1.0):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return hermitize(scale * 0.5 * (g + g.conj().T))
