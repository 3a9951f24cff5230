# Compiled orbit and tangent-map kernels. Mirrors _pykernels.py operation
# for operation; the loops release the GIL so sweeps can run in threads.
from libc.math cimport sqrt, log, fabs, INFINITY

import numpy as np


cdef inline double _log(double r) noexcept nogil:
    if r > 0.0:
        return log(r)
    return -INFINITY


cdef inline bint _inside(double x, double y, double z, double escape) noexcept nogil:
    return fabs(x) <= escape and fabs(y) <= escape and fabs(z) <= escape


def orbit(coef, s0, long n_transient, long n_keep, double escape):
    cdef double[::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef double l0 = cf[0], l1 = cf[1], l2 = cf[2], l3 = cf[3], l4 = cf[4]
    cdef double l5 = cf[5], l6 = cf[6], l7 = cf[7], l8 = cf[8], c = cf[9]
    cdef double x = float(s0[0]), y = float(s0[1]), z = float(s0[2])
    cdef double nx, ny, nz
    out_arr = np.zeros((n_keep, 3))
    cdef double[:, ::1] out = out_arr
    cdef long total = n_transient + n_keep
    cdef long i, r
    cdef long diverged = -1
    with nogil:
        for i in range(total):
            nx = l0 * x + l1 * y + l2 * z
            ny = l3 * x + l4 * y + l5 * z
            nz = l6 * x + l7 * y + l8 * z + c - z * z
            x = nx
            y = ny
            z = nz
            if not _inside(x, y, z, escape):
                diverged = i
                break
            if i >= n_transient:
                r = i - n_transient
                out[r, 0] = x
                out[r, 1] = y
                out[r, 2] = z
    return out_arr, diverged


def lyapunov(coef, s0, long n, double escape):
    cdef double[::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef double l0 = cf[0], l1 = cf[1], l2 = cf[2], l3 = cf[3], l4 = cf[4]
    cdef double l5 = cf[5], l6 = cf[6], l7 = cf[7], l8 = cf[8], c = cf[9]
    cdef double x = float(s0[0]), y = float(s0[1]), z = float(s0[2])
    cdef double q[3][3]
    cdef double w[3][3]
    cdef double s_qr[3]
    cdef double s_vol[3]
    cdef double mid_qr[3]
    cdef double mid_vol[3]
    cdef double lo[3]
    cdef double hi[3]
    cdef double inv3 = 1.0 / sqrt(3.0)
    cdef double v0 = inv3, v1 = inv3, v2 = inv3
    cdef double a0 = inv3, a1 = -inv3, a2 = inv3
    cdef double j00, j01, j02, j10, j11, j12, j20, j21, j22
    cdef double c00, c01, c02, c10, c11, c12, c20, c21, c22, det
    cdef double u0, u1, u2, b0, b1, b2, r, p, nx, ny, nz
    cdef long n_mid = (3 * n) // 4
    cdef long diverged = -1
    cdef long done = 0
    cdef long i
    cdef int col, prev, m
    for col in range(3):
        s_qr[col] = 0.0
        s_vol[col] = 0.0
        mid_qr[col] = 0.0
        mid_vol[col] = 0.0
        for m in range(3):
            q[col][m] = 1.0 if col == m else 0.0
    lo[0] = x; lo[1] = y; lo[2] = z
    hi[0] = x; hi[1] = y; hi[2] = z

    with nogil:
        for i in range(n):
            j00 = l0; j01 = l1; j02 = l2
            j10 = l3; j11 = l4; j12 = l5
            j20 = l6; j21 = l7; j22 = l8 - 2.0 * z

            for col in range(3):
                w[col][0] = j00 * q[col][0] + j01 * q[col][1] + j02 * q[col][2]
                w[col][1] = j10 * q[col][0] + j11 * q[col][1] + j12 * q[col][2]
                w[col][2] = j20 * q[col][0] + j21 * q[col][1] + j22 * q[col][2]
            for col in range(3):
                for prev in range(col):
                    p = q[prev][0] * w[col][0] + q[prev][1] * w[col][1] + q[prev][2] * w[col][2]
                    w[col][0] -= p * q[prev][0]
                    w[col][1] -= p * q[prev][1]
                    w[col][2] -= p * q[prev][2]
                r = sqrt(w[col][0] * w[col][0] + w[col][1] * w[col][1] + w[col][2] * w[col][2])
                s_qr[col] += _log(r)
                if r > 0.0:
                    q[col][0] = w[col][0] / r
                    q[col][1] = w[col][1] / r
                    q[col][2] = w[col][2] / r

            c00 = j11 * j22 - j12 * j21
            c01 = -(j10 * j22 - j12 * j20)
            c02 = j10 * j21 - j11 * j20
            c10 = -(j01 * j22 - j02 * j21)
            c11 = j00 * j22 - j02 * j20
            c12 = -(j00 * j21 - j01 * j20)
            c20 = j01 * j12 - j02 * j11
            c21 = -(j00 * j12 - j02 * j10)
            c22 = j00 * j11 - j01 * j10
            det = j00 * c00 + j01 * c01 + j02 * c02

            u0 = j00 * v0 + j01 * v1 + j02 * v2
            u1 = j10 * v0 + j11 * v1 + j12 * v2
            u2 = j20 * v0 + j21 * v1 + j22 * v2
            r = sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            s_vol[0] += _log(r)
            if r > 0.0:
                v0 = u0 / r; v1 = u1 / r; v2 = u2 / r

            b0 = c00 * a0 + c01 * a1 + c02 * a2
            b1 = c10 * a0 + c11 * a1 + c12 * a2
            b2 = c20 * a0 + c21 * a1 + c22 * a2
            r = sqrt(b0 * b0 + b1 * b1 + b2 * b2)
            s_vol[1] += _log(r)
            if r > 0.0:
                a0 = b0 / r; a1 = b1 / r; a2 = b2 / r

            s_vol[2] += _log(fabs(det))

            nx = l0 * x + l1 * y + l2 * z
            ny = l3 * x + l4 * y + l5 * z
            nz = l6 * x + l7 * y + l8 * z + c - z * z
            x = nx; y = ny; z = nz
            done = i + 1
            if not _inside(x, y, z, escape):
                diverged = i
                break
            if x < lo[0]:
                lo[0] = x
            if x > hi[0]:
                hi[0] = x
            if y < lo[1]:
                lo[1] = y
            if y > hi[1]:
                hi[1] = y
            if z < lo[2]:
                lo[2] = z
            if z > hi[2]:
                hi[2] = z
            if done == n_mid:
                for m in range(3):
                    mid_qr[m] = s_qr[m]
                    mid_vol[m] = s_vol[m]

    return {
        "qr": np.array([s_qr[0], s_qr[1], s_qr[2]]),
        "vol": np.array([s_vol[0], s_vol[1], s_vol[2]]),
        "qr_mid": np.array([mid_qr[0], mid_qr[1], mid_qr[2]]),
        "vol_mid": np.array([mid_vol[0], mid_vol[1], mid_vol[2]]),
        "n_mid": n_mid,
        "bbox": np.array([lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]]),
        "state": np.array([x, y, z]),
        "diverged_at": diverged,
        "n_done": done,
    }
