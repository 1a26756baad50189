# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for mixed l_p(l_q) norms and the operator-norm ascent.

Mirrors contraproj._pykernels formula for formula; the loops are the same,
only the per-iteration interpreter overhead is gone.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fabs

cnp.import_array()

BACKEND = "cython"


cdef double _norm(const double* x, Py_ssize_t m, Py_ssize_t n, double p, double q,
                  double* sig) noexcept nogil:
    cdef Py_ssize_t k, j
    cdef double top, s, a, outer_top = 0.0, total = 0.0
    for k in range(m):
        top = 0.0
        for j in range(n):
            a = fabs(x[k * n + j])
            if a > top:
                top = a
        if top > 0.0:
            s = 0.0
            for j in range(n):
                s += pow(fabs(x[k * n + j]) / top, q)
            sig[k] = top * pow(s, 1.0 / q)
        else:
            sig[k] = 0.0
        if sig[k] > outer_top:
            outer_top = sig[k]
    if outer_top == 0.0:
        return 0.0
    for k in range(m):
        total += pow(sig[k] / outer_top, p)
    return outer_top * pow(total, 1.0 / p)


cdef double _gradient(const double* x, Py_ssize_t m, Py_ssize_t n, double p, double q,
                      double* sig, double* out) noexcept nogil:
    """Writes the norming functional of x into out; returns ||x|| (0 if x == 0)."""
    cdef Py_ssize_t k, j
    cdef double total = _norm(x, m, n, p, q, sig)
    cdef double outer, v
    if total == 0.0:
        return 0.0
    for k in range(m):
        if sig[k] > 0.0:
            outer = pow(sig[k] / total, p - 1.0)
            for j in range(n):
                v = x[k * n + j]
                if v > 0.0:
                    out[k * n + j] = outer * pow(v / sig[k], q - 1.0)
                elif v < 0.0:
                    out[k * n + j] = -outer * pow(-v / sig[k], q - 1.0)
                else:
                    out[k * n + j] = 0.0
        else:
            for j in range(n):
                out[k * n + j] = 0.0
    return total


cdef void _matvec(const double* A, const double* x, double* y, Py_ssize_t d,
                  bint transpose) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    if transpose:
        for i in range(d):
            y[i] = 0.0
        for j in range(d):
            s = x[j]
            for i in range(d):
                y[i] += A[j * d + i] * s
    else:
        for i in range(d):
            s = 0.0
            for j in range(d):
                s += A[i * d + j] * x[j]
            y[i] = s


def block_norm(x, Py_ssize_t m, Py_ssize_t n, double p, double q):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef double[::1] sig = np.empty(m)
    if xv.shape[0] != m * n:
        raise ValueError("length does not match block layout")
    return _norm(&xv[0], m, n, p, q, &sig[0])


def block_gradient(x, Py_ssize_t m, Py_ssize_t n, double p, double q):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef double[::1] sig = np.empty(m)
    out = np.empty(m * n)
    cdef double[::1] ov = out
    if xv.shape[0] != m * n:
        raise ValueError("length does not match block layout")
    if _gradient(&xv[0], m, n, p, q, &sig[0], &ov[0]) == 0.0:
        raise ZeroDivisionError("gradient of the norm is undefined at 0")
    return out


def ascend(P, x0, Py_ssize_t m, Py_ssize_t n, double p, double q,
           Py_ssize_t maxiter=2000, double tol=1e-12, Py_ssize_t patience=50):
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t d = m * n
    if Pv.shape[0] != d or Pv.shape[1] != d:
        raise ValueError("operator shape does not match block layout")
    x_arr = np.array(x0, dtype=np.float64).ravel()
    cdef double[::1] x = x_arr
    cdef double[::1] sig = np.empty(m)
    cdef double[::1] y = np.empty(d)
    cdef double[::1] f = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] cand = np.empty(d)
    cdef double[::1] best = np.empty(d)
    cdef double[::1] fx = np.empty(d)
    cdef double pd = p / (p - 1.0), qd = q / (q - 1.0)
    cdef double nx, val, best_val, cval, cn, t, gain
    cdef Py_ssize_t it = 0, i, stall = 0
    cdef bint nonzero
    nx = _norm(&x[0], m, n, p, q, &sig[0])
    if nx == 0.0:
        return 0.0, x_arr, 0
    with nogil:
        for i in range(d):
            x[i] /= nx
        _matvec(&Pv[0, 0], &x[0], &y[0], d, False)
        val = _norm(&y[0], m, n, p, q, &sig[0])
        it = 0
        while it < maxiter:
            it += 1
            if val == 0.0:
                break
            _matvec(&Pv[0, 0], &x[0], &y[0], d, False)
            _gradient(&y[0], m, n, p, q, &sig[0], &f[0])
            _matvec(&Pv[0, 0], &f[0], &g[0], d, True)
            for i in range(d):
                best[i] = x[i]
            best_val = val
            nonzero = False
            for i in range(d):
                if g[i] != 0.0:
                    nonzero = True
                    break
            if nonzero:
                _gradient(&g[0], m, n, pd, qd, &sig[0], &cand[0])
                cn = _norm(&cand[0], m, n, p, q, &sig[0])
                for i in range(d):
                    cand[i] /= cn
                _matvec(&Pv[0, 0], &cand[0], &y[0], d, False)
                cval = _norm(&y[0], m, n, p, q, &sig[0])
                if cval > best_val:
                    for i in range(d):
                        best[i] = cand[i]
                    best_val = cval
            if best_val <= val:
                _gradient(&x[0], m, n, p, q, &sig[0], &fx[0])
                for i in range(d):
                    fx[i] = g[i] - val * fx[i]
                t = 1.0
                while t > 1e-12:
                    for i in range(d):
                        cand[i] = x[i] + t * fx[i]
                    cn = _norm(&cand[0], m, n, p, q, &sig[0])
                    if cn > 0.0:
                        for i in range(d):
                            cand[i] /= cn
                        _matvec(&Pv[0, 0], &cand[0], &y[0], d, False)
                        cval = _norm(&y[0], m, n, p, q, &sig[0])
                        if cval > best_val:
                            for i in range(d):
                                best[i] = cand[i]
                            best_val = cval
                            break
                    t *= 0.5
                if best_val <= val:
                    break
            gain = (best_val - val) / val
            for i in range(d):
                x[i] = best[i]
            val = best_val
            if gain < tol:
                stall += 1
                if stall >= patience:
                    break
            else:
                stall = 0
    return val, x_arr, it
