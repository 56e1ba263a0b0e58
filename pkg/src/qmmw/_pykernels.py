"""Pure-Python (numpy) kernels.

Mirrors the compiled ``_kernels`` extension function for function; the
backend loader picks one of the two at import time.
"""

import math

import numpy as np

OFF_TOL = 1e-13
MAX_SWEEPS = 64
TINY = 1e-290

FULL = 0
TWO_POINT = 1
ONE_POINT = 2

OK = 0
ERR_PROBABILITY = 1
ERR_NONFINITE = 2


def _rotate(a, v, p, q):
    apq = a[p, q]
    g = abs(apq)
    if g < TINY:
        a[p, q] = 0.0
        a[q, p] = 0.0
        return
    ph = complex(apq.real / g, apq.imag / g)
    cph = ph.conjugate()
    theta = (a[q, q].real - a[p, p].real) / (2.0 * g)
    if abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c

    colp = a[:, p].copy()
    colq = a[:, q].copy()
    a[:, p] = c * colp - s * cph * colq
    a[:, q] = s * colp + c * cph * colq
    rowp = a[p, :].copy()
    rowq = a[q, :].copy()
    a[p, :] = c * rowp - s * ph * rowq
    a[q, :] = s * rowp + c * ph * rowq
    a[p, q] = 0.0
    a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real

    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * cph * vq
    v[:, q] = s * vp + c * cph * vq


def eigh(a):
    """Cyclic Jacobi eigendecomposition of a Hermitian matrix.

    Returns ascending eigenvalues and the unitary of column eigenvectors.
    Only the upper triangle drives the rotations; the caller is responsible
    for passing a Hermitian matrix.
    """
    a = np.array(a, dtype=np.complex128, copy=True)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    scale = max(1.0, float(np.sqrt(np.sum(np.abs(a) ** 2))))
    mask = ~np.eye(n, dtype=bool)
    for _ in range(MAX_SWEEPS):
        off = float(np.sum(np.abs(a[mask]) ** 2))
        if math.sqrt(off) < OFF_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _rotate(a, v, p, q)
    w = a.diagonal().real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])


def softmax_from_eig(w, u):
    e = np.exp(w - w[-1])
    e /= e.sum()
    x = (u * e) @ u.conj().T
    return _hermitize(x)


def _hermitize(x):
    x = 0.5 * (x + x.conj().T)
    x[np.diag_indices_from(x)] = x.diagonal().real
    return x


def _log_sum_exp(w):
    m = w[-1]
    return m + math.log(np.exp(w - m).sum())


def kron_profile(xs, dims):
    rho = np.ones((1, 1), dtype=np.complex128)
    for j, d in enumerate(dims):
        rho = np.kron(rho, xs[j, :d, :d])
    return rho


def trace_product(w, rho):
    """Real part of tr(w @ rho)."""
    return float(np.sum(w * rho.T).real)


def _letters(k):
    return "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"[k]


def contract(w, xs, dims, digits, i):
    """Partial contraction of ``w`` against every packed profile entry except ``i``."""
    del digits
    dims = [int(d) for d in dims]
    n_players = len(dims)
    tensor = w.reshape(dims + dims)
    rows = [_letters(j) for j in range(n_players)]
    cols = [_letters(n_players + j) for j in range(n_players)]
    operands = [tensor]
    terms = ["".join(rows) + "".join(cols)]
    for j in range(n_players):
        if j == i:
            continue
        operands.append(xs[j, : dims[j], : dims[j]])
        terms.append(cols[j] + rows[j])
    spec = ",".join(terms) + "->" + rows[i] + cols[i]
    g = np.einsum(spec, *operands, optimize=False)
    return _hermitize(np.asarray(g, dtype=np.complex128))


def _energy(dims, y, yw, ref, ref_negent):
    total = ref_negent
    for i, d in enumerate(dims):
        total -= trace_product(ref[i, :d, :d], y[i, :d, :d])
        total += _log_sum_exp(yw[i, :d])
    return total


def run_block(kind, dims, digits, W, P, U, basis, Dn, radii,
              Y, Yw, YU, X, xsum,
              gammas, deltas, didx, signs, unif,
              has_ref, ref, ref_negent,
              energy, resid, outcome):
    """Advance the learner through ``len(gammas)`` steps in place.

    Returns ``(status, k)``: status 0 on success, otherwise an error code
    and the offending step index.
    """
    n_players = len(dims)
    z = np.zeros_like(Y)
    for k in range(len(gammas)):
        gamma = gammas[k]
        delta = deltas[k]
        for i, d in enumerate(dims):
            X[i, :d, :d] = softmax_from_eig(Yw[i, :d], YU[i, :d, :d])
            xsum[i, :d, :d] += X[i, :d, :d]
        e0 = _energy(dims, Y, Yw, ref, ref_negent) if has_ref else 0.0
        if has_ref:
            energy[k] = e0

        if kind == FULL:
            for i, d in enumerate(dims):
                z[i, :d, :d] = contract(W[i], X, dims, digits, i)
        else:
            probe_a = np.zeros_like(X)
            probe_b = np.zeros_like(X)
            for i, d in enumerate(dims):
                shift = (delta / radii[i]) * (np.eye(d) / d - X[i, :d, :d])
                direction = signs[k, i] * delta * basis[i, didx[k, i], :d, :d]
                probe_a[i, :d, :d] = X[i, :d, :d] + shift + direction
                probe_b[i, :d, :d] = X[i, :d, :d] + shift - direction
            if kind == TWO_POINT:
                rho_a = kron_profile(probe_a, dims)
                rho_b = kron_profile(probe_b, dims)
                for i, d in enumerate(dims):
                    diff = trace_product(W[i], rho_a) - trace_product(W[i], rho_b)
                    coef = Dn[i] / (2.0 * delta) * diff * signs[k, i]
                    z[i, :d, :d] = coef * basis[i, didx[k, i], :d, :d]
            else:
                rho = kron_profile(probe_a, dims)
                probs = np.array([trace_product(P[w], rho) for w in range(P.shape[0])])
                mass = probs.sum()
                if not abs(mass - 1.0) < 1e-8:
                    return ERR_PROBABILITY, k
                probs = np.clip(probs, 0.0, 1.0)
                cum = np.cumsum(probs / probs.sum())
                omega = int(np.searchsorted(cum, unif[k], side="right"))
                omega = min(omega, len(cum) - 1)
                while probs[omega] == 0.0 and omega > 0:
                    omega -= 1
                outcome[k] = omega
                for i, d in enumerate(dims):
                    coef = Dn[i] / delta * U[omega, i] * signs[k, i]
                    z[i, :d, :d] = coef * basis[i, didx[k, i], :d, :d]

        if not np.all(np.isfinite(z)):
            return ERR_NONFINITE, k

        lin = 0.0
        quad = 0.0
        if has_ref:
            for i, d in enumerate(dims):
                zi = z[i, :d, :d]
                lin += trace_product(zi, X[i, :d, :d] - ref[i, :d, :d])
                quad += float(np.sum(np.abs(zi) ** 2))
        for i, d in enumerate(dims):
            Y[i, :d, :d] += gamma * z[i, :d, :d]
            w, u = eigh(Y[i, :d, :d])
            Yw[i, :d] = w
            YU[i, :d, :d] = u
        if has_ref:
            e1 = _energy(dims, Y, Yw, ref, ref_negent)
            resid[k] = e0 + gamma * lin + 0.5 * gamma * gamma * quad - e1
    return OK, len(gammas)
