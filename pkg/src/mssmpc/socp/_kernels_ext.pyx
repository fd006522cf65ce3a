# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled barrier kernels. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, sqrt

cnp.import_array()

INFEASIBLE = float("inf")


cdef int _cone_parts(const double[::1] y, const double[:, :, ::1] A, const double[:, ::1] b,
                     const double[:, ::1] cc, const double[::1] d,
                     double[:, ::1] u, double[::1] s, double[::1] D) nogil:
    cdef Py_ssize_t K = A.shape[0], p = A.shape[1], nu = A.shape[2]
    cdef Py_ssize_t k, i, j
    cdef double acc, sk, nrm
    for k in range(K):
        sk = d[k]
        for j in range(nu):
            sk += cc[k, j] * y[j]
        nrm = 0.0
        for i in range(p):
            acc = b[k, i]
            for j in range(nu):
                acc += A[k, i, j] * y[j]
            u[k, i] = acc
            nrm += acc * acc
        s[k] = sk
        D[k] = sk * sk - nrm
        if sk <= 0.0 or D[k] <= 0.0:
            return 0
    return 1


cdef int _cholesky_solve(double[:, ::1] H, double[::1] rhs, double[::1] z) nogil:
    # in-place lower Cholesky of H, then z = L^{-1} rhs and rhs <- L^{-T} z
    cdef Py_ssize_t n = H.shape[0], i, j, k
    cdef double acc
    for j in range(n):
        acc = H[j, j]
        for k in range(j):
            acc -= H[j, k] * H[j, k]
        if acc <= 0.0:
            return 0
        H[j, j] = sqrt(acc)
        for i in range(j + 1, n):
            acc = H[i, j]
            for k in range(j):
                acc -= H[i, k] * H[j, k]
            H[i, j] = acc / H[j, j]
    for i in range(n):
        acc = rhs[i]
        for k in range(i):
            acc -= H[i, k] * z[k]
        z[i] = acc / H[i, i]
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for k in range(i + 1, n):
            acc -= H[k, i] * rhs[k]
        rhs[i] = acc / H[i, i]
    return 1


def newton_step(const double[::1] y, double t, const double[:, ::1] Q, const double[::1] c,
                const double[:, :, ::1] A, const double[:, ::1] b, const double[:, ::1] cc,
                const double[::1] d, const double[:, ::1] G, const double[::1] g):
    cdef Py_ssize_t nu = y.shape[0], K = A.shape[0], p = A.shape[1], L = G.shape[0]
    cdef Py_ssize_t k, i, j, l
    cdef double[:, ::1] u = np.empty((K, p))
    cdef double[::1] s = np.empty(K)
    cdef double[::1] D = np.empty(K)
    cdef double[::1] q = np.empty(nu)
    cdef double[::1] grad = np.empty(nu)
    cdef double[::1] z = np.empty(nu)
    cdef double[:, ::1] H = np.empty((nu, nu))
    cdef double acc, invD, sl, w, dec2
    cdef int ok
    with nogil:
        ok = _cone_parts(y, A, b, cc, d, u, s, D)
    if not ok:
        return None, 0.0, False
    with nogil:
        for i in range(nu):
            acc = c[i]
            for j in range(nu):
                acc += Q[i, j] * y[j]
                H[i, j] = t * Q[i, j]
            grad[i] = t * acc
        for k in range(K):
            invD = 1.0 / D[k]
            for j in range(nu):
                acc = s[k] * cc[k, j]
                for i in range(p):
                    acc -= A[k, i, j] * u[k, i]
                q[j] = acc
                grad[j] -= 2.0 * acc * invD
            for i in range(nu):
                for j in range(i + 1):
                    acc = -2.0 * cc[k, i] * cc[k, j] * invD + 4.0 * q[i] * q[j] * invD * invD
                    for l in range(p):
                        acc += 2.0 * A[k, l, i] * A[k, l, j] * invD
                    H[i, j] += acc
        for l in range(L):
            sl = g[l]
            for j in range(nu):
                sl -= G[l, j] * y[j]
            if sl <= 0.0:
                ok = 0
                break
            w = 1.0 / sl
            for i in range(nu):
                grad[i] += G[l, i] * w
                for j in range(i + 1):
                    H[i, j] += G[l, i] * G[l, j] * w * w
    if not ok:
        return None, 0.0, False
    # the Cholesky reads only the lower triangle
    for i in range(nu):
        grad[i] = -grad[i]
    with nogil:
        ok = _cholesky_solve(H, grad, z)
    if not ok:
        return None, 0.0, False
    dec2 = 0.0
    for i in range(nu):
        dec2 += z[i] * z[i]
    return np.asarray(grad), dec2, True


def merit_delta(const double[::1] y, const double[::1] dy, double step, double t,
                const double[:, ::1] Q, const double[::1] c,
                const double[:, :, ::1] A, const double[:, ::1] b, const double[:, ::1] cc,
                const double[::1] d, const double[:, ::1] G, const double[::1] g):
    cdef Py_ssize_t nu = y.shape[0], K = A.shape[0], p = A.shape[1], L = G.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double df = 0.0, total, acc, qy, ds, sk, s_new, D_old, D_new, dD, nrm_old, nrm_new
    cdef double du, uu, sl, dsl, ratio, cross, dd
    cdef double[::1] delta = np.empty(nu)
    cdef int feasible = 1
    with nogil:
        for j in range(nu):
            delta[j] = step * dy[j]
        for i in range(nu):
            qy = 0.0
            acc = 0.0
            for j in range(nu):
                qy += Q[i, j] * y[j]
                acc += Q[i, j] * delta[j]
            df += (c[i] + qy + 0.5 * acc) * delta[i]
        total = t * df
        for k in range(K):
            sk = d[k]
            ds = 0.0
            for j in range(nu):
                sk += cc[k, j] * y[j]
                ds += cc[k, j] * delta[j]
            nrm_old = 0.0
            nrm_new = 0.0
            cross = 0.0
            dd = 0.0
            for i in range(p):
                uu = b[k, i]
                du = 0.0
                for j in range(nu):
                    uu += A[k, i, j] * y[j]
                    du += A[k, i, j] * delta[j]
                nrm_old += uu * uu
                nrm_new += (uu + du) * (uu + du)
                cross += uu * du
                dd += du * du
            s_new = sk + ds
            D_old = sk * sk - nrm_old
            D_new = s_new * s_new - nrm_new
            if s_new <= 0.0 or D_new <= 0.0:
                feasible = 0
                break
            dD = 2.0 * sk * ds + ds * ds - 2.0 * cross - dd
            ratio = dD / D_old
            if ratio <= -1.0:
                feasible = 0
                break
            total -= log1p(ratio)
        if feasible:
            for k in range(L):
                sl = g[k]
                dsl = 0.0
                for j in range(nu):
                    sl -= G[k, j] * y[j]
                    dsl -= G[k, j] * delta[j]
                ratio = dsl / sl
                if ratio <= -1.0:
                    feasible = 0
                    break
                total -= log1p(ratio)
    if not feasible:
        return INFEASIBLE
    return total


def is_interior(const double[::1] y, const double[:, :, ::1] A, const double[:, ::1] b,
                const double[:, ::1] cc, const double[::1] d, const double[:, ::1] G,
                const double[::1] g):
    cdef Py_ssize_t K = A.shape[0], p = A.shape[1], L = G.shape[0], nu = y.shape[0], k, j
    cdef double[:, ::1] u = np.empty((K, p))
    cdef double[::1] s = np.empty(K)
    cdef double[::1] D = np.empty(K)
    cdef double sl
    if not _cone_parts(y, A, b, cc, d, u, s, D):
        return False
    for k in range(L):
        sl = g[k]
        for j in range(nu):
            sl -= G[k, j] * y[j]
        if sl <= 0.0:
            return False
    return True
