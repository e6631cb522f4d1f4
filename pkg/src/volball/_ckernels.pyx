# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

NAME = "cython"

cdef int EDGE_LOCAL[6][4]
EDGE_LOCAL[:] = [
    [0, 1, 2, 3],
    [0, 2, 1, 3],
    [0, 3, 1, 2],
    [1, 2, 0, 3],
    [1, 3, 0, 2],
    [2, 3, 0, 1],
]


cdef inline void _cross(double* a, double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _det(double* p0, double* p1, double* p2, double* p3) noexcept nogil:
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef double n[3]
    cdef int d
    for d in range(3):
        a[d] = p1[d] - p0[d]
        b[d] = p2[d] - p0[d]
        c[d] = p3[d] - p0[d]
    _cross(a, b, n)
    return n[0] * c[0] + n[1] * c[1] + n[2] * c[2]


def edge_weights(const double[:, ::1] image, const cnp.int64_t[:, ::1] tets,
                 const double[::1] ref_vol):
    cdef Py_ssize_t m = tets.shape[0]
    out_arr = np.empty((m, 6))
    cdef double[:, ::1] out = out_arr
    cdef double p[4][3]
    cdef double u[3]
    cdef double a[3]
    cdef double b[3]
    cdef double n1[3]
    cdef double n2[3]
    cdef Py_ssize_t t
    cdef int e, d, r, i, j, k, l
    with nogil:
        for t in range(m):
            for r in range(4):
                for d in range(3):
                    p[r][d] = image[tets[t, r], d]
            for e in range(6):
                i = EDGE_LOCAL[e][0]
                j = EDGE_LOCAL[e][1]
                k = EDGE_LOCAL[e][2]
                l = EDGE_LOCAL[e][3]
                for d in range(3):
                    u[d] = p[l][d] - p[k][d]
                    a[d] = p[i][d] - p[k][d]
                    b[d] = p[j][d] - p[k][d]
                _cross(u, a, n1)
                _cross(u, b, n2)
                out[t, e] = (n1[0] * n2[0] + n1[1] * n2[1] + n1[2] * n2[2]) / (54.0 * ref_vol[t])
    return out_arr


def walk_locate(const double[:, ::1] image, const cnp.int64_t[:, ::1] tets,
                const cnp.int64_t[:, ::1] neighbors, const double[:, ::1] points,
                Py_ssize_t start, double eps, Py_ssize_t max_steps):
    cdef Py_ssize_t nq = points.shape[0]
    found_arr = np.full(nq, -1, dtype=np.int64)
    bary_arr = np.zeros((nq, 4))
    cdef cnp.int64_t[::1] found = found_arr
    cdef double[:, ::1] bary = bary_arr
    cdef double p[4][3]
    cdef double q[3]
    cdef double lam[4]
    cdef double vol, best
    cdef Py_ssize_t s, t, current = start, step
    cdef int r, d, amin
    with nogil:
        for s in range(nq):
            for d in range(3):
                q[d] = points[s, d]
            t = current
            for step in range(max_steps):
                for r in range(4):
                    for d in range(3):
                        p[r][d] = image[tets[t, r], d]
                vol = _det(p[0], p[1], p[2], p[3])
                lam[0] = _det(q, p[1], p[2], p[3]) / vol
                lam[1] = _det(p[0], q, p[2], p[3]) / vol
                lam[2] = _det(p[0], p[1], q, p[3]) / vol
                lam[3] = _det(p[0], p[1], p[2], q) / vol
                amin = 0
                best = lam[0]
                for r in range(1, 4):
                    if lam[r] < best:
                        best = lam[r]
                        amin = r
                if best >= -eps:
                    found[s] = t
                    for r in range(4):
                        bary[s, r] = lam[r]
                    current = t
                    break
                t = neighbors[t, amin]
                if t < 0:
                    break
    return found_arr, bary_arr
