# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of numpy_backend: the sequential recurrence loops in C.

See numpy_backend for the kernel contract; outputs must agree to rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _logistic(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


def gru_seq_forward(double[:, ::1] xz, double[:, ::1] xr, double[:, ::1] xc,
                    double[:, ::1] uz, double[:, ::1] ur, double[:, ::1] uc,
                    double[::1] h0):
    cdef Py_ssize_t T = xz.shape[0]
    cdef Py_ssize_t h = xz.shape[1]
    H_arr = np.empty((T, h))
    Z_arr = np.empty((T, h))
    R_arr = np.empty((T, h))
    C_arr = np.empty((T, h))
    hp_arr = np.array(h0, dtype=np.float64)
    rh_arr = np.empty(h)
    cdef double[:, ::1] H = H_arr
    cdef double[:, ::1] Z = Z_arr
    cdef double[:, ::1] R = R_arr
    cdef double[:, ::1] C = C_arr
    cdef double[::1] hp = hp_arr
    cdef double[::1] rh = rh_arr
    cdef Py_ssize_t t, i, j
    cdef double az, ar, ac, z, r, c

    with nogil:
        for t in range(T):
            for j in range(h):
                az = xz[t, j]
                ar = xr[t, j]
                for i in range(h):
                    az += hp[i] * uz[j, i]
                    ar += hp[i] * ur[j, i]
                Z[t, j] = _logistic(az)
                R[t, j] = _logistic(ar)
            for i in range(h):
                rh[i] = R[t, i] * hp[i]
            for j in range(h):
                ac = xc[t, j]
                for i in range(h):
                    ac += rh[i] * uc[j, i]
                C[t, j] = tanh(ac)
            for j in range(h):
                z = Z[t, j]
                c = C[t, j]
                hp[j] = (1.0 - z) * hp[j] + z * c
                H[t, j] = hp[j]
    return H_arr, Z_arr, R_arr, C_arr


def gru_seq_backward(double[:, ::1] gh_out,
                     double[:, ::1] Z, double[:, ::1] R, double[:, ::1] C,
                     double[:, ::1] hprev,
                     double[:, ::1] uz, double[:, ::1] ur, double[:, ::1] uc):
    cdef Py_ssize_t T = gh_out.shape[0]
    cdef Py_ssize_t h = gh_out.shape[1]
    GZ_arr = np.empty((T, h))
    GR_arr = np.empty((T, h))
    GC_arr = np.empty((T, h))
    gh_arr = np.zeros(h)
    ght_arr = np.empty(h)
    grh_arr = np.empty(h)
    cdef double[:, ::1] GZ = GZ_arr
    cdef double[:, ::1] GR = GR_arr
    cdef double[:, ::1] GC = GC_arr
    cdef double[::1] gh = gh_arr
    cdef double[::1] ght = ght_arr
    cdef double[::1] grh = grh_arr
    cdef Py_ssize_t t, i, j
    cdef double z, r, c, acc

    with nogil:
        for t in range(T - 1, -1, -1):
            for j in range(h):
                ght[j] = gh[j] + gh_out[t, j]
                z = Z[t, j]
                c = C[t, j]
                GZ[t, j] = ght[j] * (c - hprev[t, j]) * z * (1.0 - z)
                GC[t, j] = ght[j] * z * (1.0 - c * c)
            # grh = gc @ uc  (gradient w.r.t. the reset-scaled hidden)
            for i in range(h):
                acc = 0.0
                for j in range(h):
                    acc += GC[t, j] * uc[j, i]
                grh[i] = acc
            for j in range(h):
                r = R[t, j]
                GR[t, j] = grh[j] * hprev[t, j] * r * (1.0 - r)
            for i in range(h):
                acc = ght[i] * (1.0 - Z[t, i]) + grh[i] * R[t, i]
                for j in range(h):
                    acc += GZ[t, j] * uz[j, i] + GR[t, j] * ur[j, i]
                gh[i] = acc
    return GZ_arr, GR_arr, GC_arr, gh_arr
