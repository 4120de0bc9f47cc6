"""Compiled versions of the kernels in ``_kernels_py``.

Signatures and results match the NumPy module exactly; see there for the
contracts.
"""

import numpy as np


def positive_part_sums(const double[::1] alpha1, const double[::1] alpha2,
                       const double[:, ::1] cost):
    cdef Py_ssize_t n1 = cost.shape[0], n2 = cost.shape[1], i, j
    cdef double a, val, rs
    P_arr = np.empty((n1, n2))
    rows_arr = np.empty(n1)
    cols_arr = np.zeros(n2)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] rows = rows_arr
    cdef double[::1] cols = cols_arr
    for i in range(n1):
        a = alpha1[i]
        rs = 0.0
        for j in range(n2):
            val = a + alpha2[j] - cost[i, j]
            if val > 0.0:
                P[i, j] = val
                rs += val
                cols[j] += val
            else:
                P[i, j] = 0.0
        rows[i] = rs
    return P_arr, rows_arr, cols_arr


def newton_matrix(const double[::1] alpha1, const double[::1] alpha2,
                  const double[:, ::1] cost, double shift, double threshold):
    cdef Py_ssize_t n1 = cost.shape[0], n2 = cost.shape[1], i, j
    cdef Py_ssize_t m = n1 + n2
    N_arr = np.zeros((m, m))
    cdef double[:, ::1] N = N_arr
    for i in range(n1):
        for j in range(n2):
            if alpha1[i] + alpha2[j] - cost[i, j] >= threshold:
                N[i, n1 + j] = 1.0
                N[n1 + j, i] = 1.0
                N[i, i] += 1.0
                N[n1 + j, n1 + j] += 1.0
    for i in range(m):
        N[i, i] += shift
    return N_arr


def system_matrix_from_mask(const unsigned char[:, ::1] mask, double shift):
    cdef Py_ssize_t n1 = mask.shape[0], n2 = mask.shape[1], i, j
    cdef Py_ssize_t m = n1 + n2
    N_arr = np.zeros((m, m))
    cdef double[:, ::1] N = N_arr
    for i in range(n1):
        for j in range(n2):
            if mask[i, j]:
                N[i, n1 + j] = 1.0
                N[n1 + j, i] = 1.0
                N[i, i] += 1.0
                N[n1 + j, n1 + j] += 1.0
    for i in range(m):
        N[i, i] += shift
    return N_arr


def project_simplex(const double[::1] v, double mass):
    cdef Py_ssize_t n = v.shape[0], k
    cdef double[::1] u = np.sort(v)[::-1].copy()
    cdef double css = 0.0, tau = 0.0, run = 0.0
    for k in range(n):
        run += u[k]
        if u[k] - (run - mass) / (k + 1) > 0.0:
            css = run
            tau = (css - mass) / (k + 1)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    for k in range(n):
        out[k] = v[k] - tau if v[k] > tau else 0.0
    return out_arr


def bland_entering(const double[:, ::1] cost, const double[::1] u,
                   const double[::1] v, const unsigned char[:, ::1] basis,
                   double tol):
    cdef Py_ssize_t n1 = cost.shape[0], n2 = cost.shape[1], i, j
    for i in range(n1):
        for j in range(n2):
            if not basis[i, j] and cost[i, j] - u[i] - v[j] < -tol:
                return i, j
    return -1, -1
