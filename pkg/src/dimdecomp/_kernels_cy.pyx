# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the NumPy kernels in _kernels_py.

Same contracts, same outputs (up to floating-point association order inside a
single subset product, which both implementations evaluate left to right).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log

cnp.import_array()


def esym_tables(sel, unsel, Py_ssize_t s_max):
    """See _kernels_py.esym_tables."""
    cdef double[:, ::1] sel_v = np.ascontiguousarray(sel, dtype=np.float64)
    cdef double[::1] unsel_v = np.ascontiguousarray(unsel, dtype=np.float64)
    cdef Py_ssize_t n = sel_v.shape[0], dim = sel_v.shape[1]
    out_np = np.zeros((n, s_max + 1))
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t p, i, s, top
    cdef double a, b
    with nogil:
        for p in range(n):
            out[p, 0] = 1.0
            for i in range(dim):
                a = unsel_v[i]
                b = sel_v[p, i]
                top = i + 1
                if top > s_max:
                    top = s_max
                for s in range(top, 0, -1):
                    out[p, s] = out[p, s] * a + out[p, s - 1] * b
                out[p, 0] *= a
    return out_np


def restriction_log_tables(H, G, nu, mu, double nu0, double mu0,
                           Py_ssize_t s_max, double floor):
    """See _kernels_py.restriction_log_tables."""
    cdef bint has_h = H is not None
    cdef bint has_g = G is not None
    if has_h:
        base = np.asarray(H)
    else:
        base = np.asarray(G)
    cdef Py_ssize_t n = base.shape[0], dim = base.shape[1]

    # Transposed copies give contiguous per-coordinate streams in the hot loop.
    cdef double[:, ::1] Ht = (
        np.ascontiguousarray(np.asarray(H, dtype=np.float64).T)
        if has_h else np.zeros((1, 1))
    )
    cdef double[:, ::1] Gt = (
        np.ascontiguousarray(np.asarray(G, dtype=np.float64).T)
        if has_g else np.zeros((1, 1))
    )
    cdef double[::1] nu_v = np.ascontiguousarray(nu, dtype=np.float64)
    cdef double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)

    cdef double mu_total = mu0
    cdef Py_ssize_t i
    for i in range(dim):
        mu_total += mu_v[i]

    L_np = np.zeros((n, s_max + 1))
    neg_np = np.zeros((n, s_max + 1), dtype=np.int64)
    cdef double[:, ::1] L = L_np
    cdef cnp.int64_t[:, ::1] neg = neg_np

    idx_np = np.zeros(s_max + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_np
    cdef Py_ssize_t s, j, k, p, bad_point
    cdef double pref, addc, b
    cdef bint done
    bad_point = -1

    for s in range(s_max + 1):
        for j in range(s):
            idx[j] = j
        while True:
            # per-subset scalars
            addc = mu_total
            for j in range(s):
                addc -= mu_v[idx[j]]
            pref = nu0
            if nu0 != 0.0:
                k = 0
                for i in range(dim):
                    if k < s and idx[k] == i:
                        k += 1
                    else:
                        pref *= nu_v[i]
            with nogil:
                for p in range(n):
                    b = addc
                    if nu0 != 0.0:
                        b = pref
                        for j in range(s):
                            b *= Ht[idx[j], p]
                        b += addc
                    if has_g:
                        for j in range(s):
                            b += Gt[idx[j], p]
                    if fabs(b) <= floor:
                        bad_point = p
                        break
                    L[p, s] += log(fabs(b))
                    if b < 0.0:
                        neg[p, s] += 1
            if bad_point >= 0:
                return L_np, neg_np, (bad_point, tuple(idx_np[:s].tolist()))
            # advance the combination
            done = True
            for j in range(s - 1, -1, -1):
                if idx[j] != dim - s + j:
                    done = False
                    break
            if done:
                break
            idx[j] += 1
            for k in range(j + 1, s):
                idx[k] = idx[k - 1] + 1
    return L_np, neg_np, None
