# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops; see ``_kernels_py`` for the reference."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def p1_element_stiffness(coords, elements, elem_coeff):
    cdef double[:, ::1] P = np.ascontiguousarray(coords, dtype=np.float64)
    cdef long long[:, ::1] E = np.ascontiguousarray(elements, dtype=np.int64)
    cdef double[::1] c = np.ascontiguousarray(elem_coeff, dtype=np.float64)
    cdef Py_ssize_t ne = E.shape[0], e, a, b
    cdef int nv = E.shape[1]
    cdef double le, k, ta, s
    cdef double bb[3]
    cdef double gg[3]
    out = np.empty((ne, nv, nv))
    cdef double[:, :, ::1] K = out
    cdef bint bad = 0
    with nogil:
        if nv == 2:
            for e in range(ne):
                le = P[E[e, 1], 0] - P[E[e, 0], 0]
                if le <= 0:
                    bad = 1
                    break
                k = c[e] / le
                K[e, 0, 0] = k
                K[e, 1, 1] = k
                K[e, 0, 1] = -k
                K[e, 1, 0] = -k
        else:
            for e in range(ne):
                bb[0] = P[E[e, 1], 1] - P[E[e, 2], 1]
                bb[1] = P[E[e, 2], 1] - P[E[e, 0], 1]
                bb[2] = P[E[e, 0], 1] - P[E[e, 1], 1]
                gg[0] = P[E[e, 2], 0] - P[E[e, 1], 0]
                gg[1] = P[E[e, 0], 0] - P[E[e, 2], 0]
                gg[2] = P[E[e, 1], 0] - P[E[e, 0], 0]
                ta = bb[0] * gg[1] - bb[1] * gg[0]
                if ta <= 0:
                    bad = 1
                    break
                s = c[e] / (2.0 * ta)
                for a in range(3):
                    for b in range(3):
                        K[e, a, b] = s * (bb[a] * bb[b] + gg[a] * gg[b])
    if bad:
        raise ValueError("degenerate or inverted element")
    return out


def sg_block_matvec(indptr, indices, data, ti, tj, tk, tv, X):
    cdef long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[:, ::1] D = np.ascontiguousarray(data, dtype=np.float64)
    cdef long long[::1] I = np.ascontiguousarray(ti, dtype=np.int64)
    cdef long long[::1] J = np.ascontiguousarray(tj, dtype=np.int64)
    cdef long long[::1] Kk = np.ascontiguousarray(tk, dtype=np.int64)
    cdef double[::1] V = np.ascontiguousarray(tv, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1, nb = Xv.shape[0], nt = D.shape[0]
    cdef Py_ssize_t ntri = I.shape[0]
    out = np.zeros((nb, n))
    cdef double[:, ::1] Y = out
    # per-row scratch: s[i, j] = (A_i x_j)[row]
    scratch = np.zeros((nt, nb))
    cdef double[:, ::1] S = scratch
    cdef Py_ssize_t r, p, i, j, t, col
    cdef double a
    with nogil:
        for r in range(n):
            for i in range(nt):
                for j in range(nb):
                    S[i, j] = 0.0
            for p in range(ip[r], ip[r + 1]):
                col = ix[p]
                for i in range(nt):
                    a = D[i, p]
                    if a != 0.0:
                        for j in range(nb):
                            S[i, j] += a * Xv[j, col]
            for t in range(ntri):
                Y[Kk[t], r] += V[t] * S[I[t], J[t]]
    return out
