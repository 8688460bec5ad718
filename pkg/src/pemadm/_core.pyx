# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the sequential simulation loops.

Mirrors _kernels_py.py operation for operation (same accumulation order, no
fused multiply-add thanks to -ffp-contract=off) so that both backends yield
bit-identical trajectories.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def markov_path(const double[:, ::1] cum_rows, long r0, const double[::1] uniforms):
    cdef Py_ssize_t steps = uniforms.shape[0]
    cdef Py_ssize_t n = cum_rows.shape[0]
    path_arr = np.empty(steps + 1, dtype=np.int64)
    cdef long[::1] path = path_arr
    cdef Py_ssize_t k, j
    cdef long cur = r0, nxt
    cdef double u
    path[0] = r0
    for k in range(steps):
        u = uniforms[k]
        nxt = n - 1
        for j in range(n):
            if u < cum_rows[cur, j]:
                nxt = j
                break
        path[k + 1] = nxt
        cur = nxt
    return path_arr


def linear_rollout(const double[:, ::1] A, const double[:, ::1] B,
                   const double[:, :, ::1] C_st, const double[:, :, ::1] D_st,
                   const double[:, :, ::1] E_st, const double[:, :, ::1] K_st,
                   const long[::1] r_path, const double[:, ::1] w, const double[:, ::1] v,
                   double[:, ::1] x, double[:, ::1] y, double[:, ::1] u,
                   double guard):
    cdef Py_ssize_t horizon = r_path.shape[0] - 1
    cdef Py_ssize_t n1 = A.shape[0]
    cdef Py_ssize_t n2 = B.shape[1]
    cdef Py_ssize_t n3 = C_st.shape[1]
    cdef Py_ssize_t nw = D_st.shape[2]
    cdef Py_ssize_t k, a, b, c, r
    cdef long i
    cdef long diverged_at = -1
    cdef double acc1, acc2, acc3, val
    for k in range(horizon + 1):
        i = r_path[k]
        for a in range(n3):
            acc1 = 0.0
            for c in range(n1):
                acc1 += C_st[i, a, c] * x[k, c]
            acc2 = 0.0
            for c in range(nw):
                acc2 += D_st[i, a, c] * w[k, c]
            acc3 = 0.0
            for c in range(n3):
                acc3 += E_st[i, a, c] * v[k, c]
            y[k, a] = (acc1 + acc2) + acc3
        for b in range(n2):
            acc1 = 0.0
            for a in range(n3):
                acc1 += K_st[i, b, a] * y[k, a]
            u[k, b] = acc1
        if diverged_at >= 0:
            return diverged_at
        if k < horizon:
            for r in range(n1):
                acc1 = 0.0
                for c in range(n1):
                    acc1 += A[r, c] * x[k, c]
                acc2 = 0.0
                for c in range(n2):
                    acc2 += B[r, c] * u[k, c]
                x[k + 1, r] = acc1 + acc2
            for r in range(n1):
                val = x[k + 1, r]
                if not (val == val) or val > guard or val < -guard:
                    diverged_at = k + 1
                    break
    return diverged_at
