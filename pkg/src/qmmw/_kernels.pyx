# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Jacobi eigensolver, matrix softmax, tensor contractions
and the fused learner step loop.

Function-for-function twin of ``_pykernels``.
"""

import numpy as np

from libc.math cimport sqrt, exp, log, fabs, hypot, isfinite

ctypedef double complex cplx

OFF_TOL = 1e-13
MAX_SWEEPS = 64
cdef double _OFF_TOL = 1e-13
cdef Py_ssize_t _MAX_SWEEPS = 64

FULL = 0
TWO_POINT = 1
ONE_POINT = 2

OK = 0
ERR_PROBABILITY = 1
ERR_NONFINITE = 2


cdef inline double _cabs(cplx z) noexcept nogil:
    return hypot(z.real, z.imag)


cdef inline cplx _conj(cplx z) noexcept nogil:
    return z.real - 1j * z.imag


cdef void _rotate(cplx[:, ::1] a, cplx[:, ::1] v, Py_ssize_t n,
                  Py_ssize_t p, Py_ssize_t q) noexcept nogil:
    cdef cplx apq = a[p, q]
    cdef double g = _cabs(apq)
    cdef cplx ph, cph, xp, xq
    cdef double theta, t, c, s
    cdef Py_ssize_t r
    if g < 1e-290:
        a[p, q] = 0.0
        a[q, p] = 0.0
        return
    ph = apq.real / g + 1j * (apq.imag / g)
    cph = _conj(ph)
    theta = (a[q, q].real - a[p, p].real) / (2.0 * g)
    if fabs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    c = 1.0 / sqrt(t * t + 1.0)
    s = t * c
    for r in range(n):
        xp = a[r, p]
        xq = a[r, q]
        a[r, p] = c * xp - s * cph * xq
        a[r, q] = s * xp + c * cph * xq
    for r in range(n):
        xp = a[p, r]
        xq = a[q, r]
        a[p, r] = c * xp - s * ph * xq
        a[q, r] = s * xp + c * ph * xq
    a[p, q] = 0.0
    a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real
    for r in range(n):
        xp = v[r, p]
        xq = v[r, q]
        v[r, p] = c * xp - s * cph * xq
        v[r, q] = s * xp + c * cph * xq


cdef void _eig(cplx[:, ::1] a, Py_ssize_t n, cplx[:, ::1] v,
               double[::1] w, cplx[:, ::1] u, Py_ssize_t[::1] order) noexcept nogil:
    """Diagonalize the n-by-n corner of ``a`` in place; results go to w, u."""
    cdef Py_ssize_t p, q, sweep, k, j, tmp
    cdef double off, total, scale, m
    for p in range(n):
        for q in range(n):
            v[p, q] = 1.0 if p == q else 0.0
    total = 0.0
    for p in range(n):
        for q in range(n):
            m = _cabs(a[p, q])
            total += m * m
    scale = sqrt(total)
    if scale < 1.0:
        scale = 1.0
    for sweep in range(_MAX_SWEEPS):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    m = _cabs(a[p, q])
                    off += m * m
        if sqrt(off) < _OFF_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _rotate(a, v, n, p, q)
    # stable insertion sort on the diagonal
    for k in range(n):
        order[k] = k
    for k in range(1, n):
        tmp = order[k]
        j = k - 1
        while j >= 0 and a[order[j], order[j]].real > a[tmp, tmp].real:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = tmp
    for k in range(n):
        w[k] = a[order[k], order[k]].real
        for p in range(n):
            u[p, k] = v[p, order[k]]


def eigh(a):
    """Cyclic Jacobi eigendecomposition; ascending eigenvalues."""
    cdef cplx[:, ::1] work = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t n = work.shape[0]
    v = np.empty((n, n), dtype=np.complex128)
    w = np.empty(n, dtype=np.float64)
    u = np.empty((n, n), dtype=np.complex128)
    order = np.empty(n, dtype=np.intp)
    _eig(work, n, v, w, u, order)
    return w, u


cdef void _softmax(const double[::1] w, const cplx[:, ::1] u, Py_ssize_t n,
                   cplx[:, ::1] x, double[::1] e) noexcept nogil:
    cdef Py_ssize_t p, q, k
    cdef double top = w[n - 1]
    cdef double total = 0.0
    cdef cplx acc
    for k in range(n):
        e[k] = exp(w[k] - top)
        total += e[k]
    for k in range(n):
        e[k] /= total
    for p in range(n):
        for q in range(p, n):
            acc = 0.0
            for k in range(n):
                acc = acc + u[p, k] * e[k] * _conj(u[q, k])
            if p == q:
                x[p, p] = acc.real
            else:
                x[p, q] = acc
                x[q, p] = _conj(acc)


def softmax_from_eig(w, u):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const cplx[:, ::1] uv = np.ascontiguousarray(u, dtype=np.complex128)
    cdef Py_ssize_t n = wv.shape[0]
    x = np.empty((n, n), dtype=np.complex128)
    e = np.empty(n, dtype=np.float64)
    _softmax(wv, uv, n, x, e)
    return x


cdef double _log_sum_exp(const double[:, ::1] yw, Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    cdef double top = yw[i, n - 1]
    cdef double total = 0.0
    cdef Py_ssize_t k
    for k in range(n):
        total += exp(yw[i, k] - top)
    return top + log(total)


cdef void _kron(const cplx[:, :, ::1] xs, const Py_ssize_t[:, ::1] digits, Py_ssize_t n_players,
                Py_ssize_t n, cplx[:, ::1] rho) noexcept nogil:
    cdef Py_ssize_t a, b, j
    cdef cplx prod
    for a in range(n):
        for b in range(n):
            prod = 1.0
            for j in range(n_players):
                prod = prod * xs[j, digits[a, j], digits[b, j]]
            rho[a, b] = prod


cdef double _trace(const cplx[:, ::1] w, const cplx[:, ::1] rho, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef double acc = 0.0
    for a in range(n):
        for b in range(n):
            acc += (w[a, b] * rho[b, a]).real
    return acc


cdef void _contract(const cplx[:, ::1] w, const cplx[:, :, ::1] xs, const Py_ssize_t[:, ::1] digits,
                    Py_ssize_t n_players, Py_ssize_t n, Py_ssize_t i, Py_ssize_t d,
                    cplx[:, ::1] g) noexcept nogil:
    cdef Py_ssize_t a, b, j, x, y
    cdef cplx prod
    for x in range(d):
        for y in range(d):
            g[x, y] = 0.0
    for a in range(n):
        x = digits[a, i]
        for b in range(n):
            y = digits[b, i]
            if x > y:
                continue
            prod = w[a, b]
            for j in range(n_players):
                if j != i:
                    prod = prod * xs[j, digits[b, j], digits[a, j]]
            g[x, y] = g[x, y] + prod
    for x in range(d):
        g[x, x] = g[x, x].real
        for y in range(x + 1, d):
            g[y, x] = _conj(g[x, y])


def _digits(dims):
    dims = [int(d) for d in dims]
    n = int(np.prod(dims))
    out = np.zeros((n, len(dims)), dtype=np.intp)
    for a in range(n):
        rem = a
        for j in range(len(dims) - 1, -1, -1):
            out[a, j] = rem % dims[j]
            rem //= dims[j]
    return out


def kron_profile(xs, dims):
    cdef const cplx[:, :, ::1] xv = np.ascontiguousarray(xs, dtype=np.complex128)
    cdef const Py_ssize_t[:, ::1] dg = _digits(dims)
    cdef Py_ssize_t n = dg.shape[0]
    rho = np.empty((n, n), dtype=np.complex128)
    _kron(xv, dg, len(dims), n, rho)
    return rho


def trace_product(w, rho):
    """Real part of tr(w @ rho)."""
    cdef const cplx[:, ::1] wv = np.ascontiguousarray(w, dtype=np.complex128)
    cdef const cplx[:, ::1] rv = np.ascontiguousarray(rho, dtype=np.complex128)
    return _trace(wv, rv, wv.shape[0])


def contract(w, xs, dims, digits, i):
    """Partial contraction of ``w`` against every packed profile entry except ``i``."""
    cdef const cplx[:, ::1] wv = np.ascontiguousarray(w, dtype=np.complex128)
    cdef const cplx[:, :, ::1] xv = np.ascontiguousarray(xs, dtype=np.complex128)
    cdef const Py_ssize_t[:, ::1] dg = np.ascontiguousarray(digits, dtype=np.intp)
    cdef Py_ssize_t d = int(dims[i])
    g = np.empty((d, d), dtype=np.complex128)
    _contract(wv, xv, dg, len(dims), wv.shape[0], i, d, g)
    return g


def run_block(int kind, dims_in, digits_in, W_in, P_in, U_in, basis_in, Dn_in, radii_in,
              Y_in, Yw_in, YU_in, X_in, xsum_in,
              gammas_in, deltas_in, didx_in, signs_in, unif_in,
              bint has_ref, ref_in, double ref_negent,
              energy_in, resid_in, outcome_in):
    """Advance the learner through ``len(gammas)`` steps in place.

    Returns ``(status, k)``: status 0 on success, otherwise an error code
    and the offending step index.
    """
    cdef Py_ssize_t[::1] dims = np.ascontiguousarray(dims_in, dtype=np.intp)
    cdef const Py_ssize_t[:, ::1] digits = digits_in
    cdef const cplx[:, :, ::1] W = W_in
    cdef const cplx[:, :, ::1] P = P_in
    cdef const double[:, ::1] U = U_in
    cdef const cplx[:, :, :, ::1] basis = basis_in
    cdef const double[::1] Dn = Dn_in
    cdef const double[::1] radii = radii_in
    cdef cplx[:, :, ::1] Y = Y_in
    cdef double[:, ::1] Yw = Yw_in
    cdef cplx[:, :, ::1] YU = YU_in
    cdef cplx[:, :, ::1] X = X_in
    cdef cplx[:, :, ::1] xsum = xsum_in
    cdef const double[::1] gammas = gammas_in
    cdef const double[::1] deltas = deltas_in
    cdef const Py_ssize_t[:, ::1] didx = didx_in
    cdef const Py_ssize_t[:, ::1] signs = signs_in
    cdef const double[::1] unif = unif_in
    cdef const cplx[:, :, ::1] ref = ref_in
    cdef double[::1] energy = energy_in
    cdef double[::1] resid = resid_in
    cdef Py_ssize_t[::1] outcome = outcome_in

    cdef Py_ssize_t n_players = dims.shape[0]
    cdef Py_ssize_t n = W.shape[1]
    cdef Py_ssize_t dmax = Y.shape[1]
    cdef Py_ssize_t n_out = P.shape[0]
    cdef Py_ssize_t steps = gammas.shape[0]

    cdef cplx[:, :, ::1] Z = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
    cdef cplx[:, :, ::1] Xa = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
    cdef cplx[:, :, ::1] Xb = np.zeros((n_players, dmax, dmax), dtype=np.complex128)
    cdef cplx[:, ::1] rho_a = np.zeros((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] rho_b = np.zeros((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] work = np.zeros((dmax, dmax), dtype=np.complex128)
    cdef cplx[:, ::1] vtmp = np.zeros((dmax, dmax), dtype=np.complex128)
    cdef Py_ssize_t[::1] order = np.zeros(dmax, dtype=np.intp)
    cdef double[::1] etmp = np.zeros(dmax, dtype=np.float64)
    cdef double[::1] probs = np.zeros(max(n_out, 1), dtype=np.float64)

    cdef Py_ssize_t k, i, d, p, q, j, omega
    cdef double gamma, delta, e0, e1, lin, quad, shift, coef, diff, mass, cum, target, m
    cdef double sgn
    cdef int status = 0
    cdef cplx dirv

    with nogil:
        for k in range(steps):
            gamma = gammas[k]
            delta = deltas[k]
            for i in range(n_players):
                d = dims[i]
                _softmax(Yw[i], YU[i], d, X[i], etmp)
                for p in range(d):
                    for q in range(d):
                        xsum[i, p, q] = xsum[i, p, q] + X[i, p, q]
            e0 = 0.0
            if has_ref:
                e0 = ref_negent
                for i in range(n_players):
                    d = dims[i]
                    e0 = e0 - _trace(ref[i], Y[i], d) + _log_sum_exp(Yw, i, d)
                energy[k] = e0

            if kind == 0:
                for i in range(n_players):
                    _contract(W[i], X, digits, n_players, n, i, dims[i], Z[i])
            else:
                for i in range(n_players):
                    d = dims[i]
                    shift = delta / radii[i]
                    sgn = <double> signs[k, i]
                    for p in range(d):
                        for q in range(d):
                            dirv = sgn * delta * basis[i, didx[k, i], p, q]
                            Xa[i, p, q] = X[i, p, q] - shift * X[i, p, q] + dirv
                            Xb[i, p, q] = X[i, p, q] - shift * X[i, p, q] - dirv
                        Xa[i, p, p] = Xa[i, p, p] + shift / d
                        Xb[i, p, p] = Xb[i, p, p] + shift / d
                if kind == 1:
                    _kron(Xa, digits, n_players, n, rho_a)
                    _kron(Xb, digits, n_players, n, rho_b)
                    for i in range(n_players):
                        d = dims[i]
                        diff = _trace(W[i], rho_a, n) - _trace(W[i], rho_b, n)
                        coef = Dn[i] / (2.0 * delta) * diff * (<double> signs[k, i])
                        for p in range(d):
                            for q in range(d):
                                Z[i, p, q] = coef * basis[i, didx[k, i], p, q]
                else:
                    _kron(Xa, digits, n_players, n, rho_a)
                    mass = 0.0
                    for omega in range(n_out):
                        probs[omega] = _trace(P[omega], rho_a, n)
                        mass += probs[omega]
                    if not fabs(mass - 1.0) < 1e-8:
                        status = 1
                        break
                    mass = 0.0
                    for omega in range(n_out):
                        if probs[omega] < 0.0:
                            probs[omega] = 0.0
                        elif probs[omega] > 1.0:
                            probs[omega] = 1.0
                        mass += probs[omega]
                    target = unif[k]
                    cum = 0.0
                    omega = n_out - 1
                    for j in range(n_out):
                        cum += probs[j] / mass
                        if cum > target:
                            omega = j
                            break
                    while probs[omega] == 0.0 and omega > 0:
                        omega -= 1
                    outcome[k] = omega
                    for i in range(n_players):
                        d = dims[i]
                        coef = Dn[i] / delta * U[omega, i] * (<double> signs[k, i])
                        for p in range(d):
                            for q in range(d):
                                Z[i, p, q] = coef * basis[i, didx[k, i], p, q]

            lin = 0.0
            quad = 0.0
            for i in range(n_players):
                d = dims[i]
                for p in range(d):
                    for q in range(d):
                        if not (isfinite(Z[i, p, q].real) and isfinite(Z[i, p, q].imag)):
                            status = 2
                        if has_ref:
                            lin += (Z[i, p, q] * (X[i, q, p] - ref[i, q, p])).real
                            m = _cabs(Z[i, p, q])
                            quad += m * m
            if status != 0:
                break
            for i in range(n_players):
                d = dims[i]
                for p in range(d):
                    for q in range(d):
                        Y[i, p, q] = Y[i, p, q] + gamma * Z[i, p, q]
                        work[p, q] = Y[i, p, q]
                _eig(work, d, vtmp, Yw[i], YU[i], order)
            if has_ref:
                e1 = ref_negent
                for i in range(n_players):
                    d = dims[i]
                    e1 = e1 - _trace(ref[i], Y[i], d) + _log_sum_exp(Yw, i, d)
                resid[k] = e0 + gamma * lin + 0.5 * gamma * gamma * quad - e1
    if status != 0:
        return status, k
    return OK, steps
