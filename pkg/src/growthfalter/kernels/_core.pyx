"""Compiled backend for the mixed-model hot kernels.

Same contract as kernels.pure, with the per-child q x q factorizations
and triangular solves done in plain C loops: the blocks are tiny (q <= 8
in practice), so avoiding per-call numpy overhead in the optimizer's
inner loop is worth roughly an order of magnitude.
"""

import numpy as np

from libc.math cimport log

BACKEND = "compiled"


def pls_components(double[:, ::1] lam, double[:, :, ::1] ztz,
                   double[:, :, ::1] ztx, double[:, ::1] zty):
    """See kernels.pure.pls_components."""
    cdef Py_ssize_t m = ztz.shape[0]
    cdef Py_ssize_t q = ztz.shape[1]
    cdef Py_ssize_t p = ztx.shape[2]
    cdef Py_ssize_t r = p + 1
    cdef Py_ssize_t i, j, k, l, c1, c2

    s_arr = np.zeros((r, r))
    a_arr = np.empty((q, q))
    tmp_arr = np.empty((q, q))
    g_arr = np.empty((q, r))
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[:, ::1] g = g_arr

    cdef double logdet = 0.0
    cdef double acc, piv

    for i in range(m):
        # tmp = lam' ZtZ_i  (lam is lower triangular: lam[k, j] = 0 for k < j)
        for j in range(q):
            for k in range(q):
                acc = 0.0
                for l in range(j, q):
                    acc += lam[l, j] * ztz[i, l, k]
                tmp[j, k] = acc
        # a = tmp lam + I
        for j in range(q):
            for k in range(q):
                acc = 1.0 if j == k else 0.0
                for l in range(k, q):
                    acc += tmp[j, l] * lam[l, k]
                a[j, k] = acc
        # in-place Cholesky (lower triangle of a)
        for j in range(q):
            acc = a[j, j]
            for k in range(j):
                acc -= a[j, k] * a[j, k]
            if acc <= 0.0:
                return float("inf"), None
            piv = acc ** 0.5
            a[j, j] = piv
            logdet += 2.0 * log(piv)
            for k in range(j + 1, q):
                acc = a[k, j]
                for l in range(j):
                    acc -= a[k, l] * a[j, l]
                a[k, j] = acc / piv
        # g = lam' [ZtX_i | Zty_i]
        for j in range(q):
            for c1 in range(p):
                acc = 0.0
                for l in range(j, q):
                    acc += lam[l, j] * ztx[i, l, c1]
                g[j, c1] = acc
            acc = 0.0
            for l in range(j, q):
                acc += lam[l, j] * zty[i, l]
            g[j, p] = acc
        # forward solve L w = g, overwriting g
        for c1 in range(r):
            for j in range(q):
                acc = g[j, c1]
                for k in range(j):
                    acc -= a[j, k] * g[k, c1]
                g[j, c1] = acc / a[j, j]
        # s += w' w (upper triangle)
        for c1 in range(r):
            for c2 in range(c1, r):
                acc = 0.0
                for j in range(q):
                    acc += g[j, c1] * g[j, c2]
                s[c1, c2] += acc

    for c1 in range(r):
        for c2 in range(c1):
            s[c1, c2] = s[c2, c1]
    return logdet, s_arr


def ranef_means(double[:, ::1] lam, double[:, :, ::1] ztz,
                double[:, :, ::1] ztx, double[:, ::1] zty,
                double[::1] beta):
    """See kernels.pure.ranef_means."""
    cdef Py_ssize_t m = ztz.shape[0]
    cdef Py_ssize_t q = ztz.shape[1]
    cdef Py_ssize_t p = ztx.shape[2]
    cdef Py_ssize_t i, j, k, l

    out_arr = np.empty((m, q))
    a_arr = np.empty((q, q))
    tmp_arr = np.empty((q, q))
    resid_arr = np.empty(q)
    rhs_arr = np.empty(q)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[::1] resid = resid_arr
    cdef double[::1] rhs = rhs_arr
    cdef double acc, piv

    for i in range(m):
        for j in range(q):
            for k in range(q):
                acc = 0.0
                for l in range(j, q):
                    acc += lam[l, j] * ztz[i, l, k]
                tmp[j, k] = acc
        for j in range(q):
            for k in range(q):
                acc = 1.0 if j == k else 0.0
                for l in range(k, q):
                    acc += tmp[j, l] * lam[l, k]
                a[j, k] = acc
        for j in range(q):
            acc = a[j, j]
            for k in range(j):
                acc -= a[j, k] * a[j, k]
            if acc <= 0.0:
                raise np.linalg.LinAlgError("random-effect system not positive definite")
            piv = acc ** 0.5
            a[j, j] = piv
            for k in range(j + 1, q):
                acc = a[k, j]
                for l in range(j):
                    acc -= a[k, l] * a[j, l]
                a[k, j] = acc / piv
        # rhs = lam' (zty_i - ztx_i beta)
        for j in range(q):
            acc = zty[i, j]
            for k in range(p):
                acc -= ztx[i, j, k] * beta[k]
            resid[j] = acc
        for j in range(q):
            acc = 0.0
            for l in range(j, q):
                acc += lam[l, j] * resid[l]
            rhs[j] = acc
        # solve A x = rhs via the Cholesky factor
        for j in range(q):
            acc = rhs[j]
            for k in range(j):
                acc -= a[j, k] * rhs[k]
            rhs[j] = acc / a[j, j]
        for j in range(q - 1, -1, -1):
            acc = rhs[j]
            for k in range(j + 1, q):
                acc -= a[k, j] * rhs[k]
            rhs[j] = acc / a[j, j]
        # out_i = lam x
        for j in range(q):
            acc = 0.0
            for l in range(j + 1):
                acc += lam[j, l] * rhs[l]
            out[i, j] = acc
    return out_arr
