"""Pure-Python orbit and tangent-map kernels.

Same arithmetic, same operation order as the compiled module, so both
backends agree to rounding. Models are quadratic maps
s' = L s + (0, 0, c - z**2) packed as ten doubles (L row-major, then c).
"""
import math

import numpy as np


def orbit(coef, s0, n_transient, n_keep, escape):
    l0, l1, l2, l3, l4, l5, l6, l7, l8, c = [float(v) for v in coef]
    x, y, z = float(s0[0]), float(s0[1]), float(s0[2])
    out = np.zeros((n_keep, 3))
    total = n_transient + n_keep
    for i in range(total):
        nx = l0 * x + l1 * y + l2 * z
        ny = l3 * x + l4 * y + l5 * z
        nz = l6 * x + l7 * y + l8 * z + c - z * z
        x, y, z = nx, ny, nz
        if not (abs(x) <= escape and abs(y) <= escape and abs(z) <= escape):
            return out, i
        if i >= n_transient:
            r = i - n_transient
            out[r, 0] = x
            out[r, 1] = y
            out[r, 2] = z
    return out, -1


def _log(r):
    return math.log(r) if r > 0.0 else -math.inf


def lyapunov(coef, s0, n, escape):
    l0, l1, l2, l3, l4, l5, l6, l7, l8, c = [float(v) for v in coef]
    x, y, z = float(s0[0]), float(s0[1]), float(s0[2])
    q = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]  # columns
    inv3 = 1.0 / math.sqrt(3.0)
    v0, v1, v2 = inv3, inv3, inv3
    a0, a1, a2 = inv3, -inv3, inv3
    s_qr = [0.0, 0.0, 0.0]
    s_vol = [0.0, 0.0, 0.0]
    mid_qr = [0.0, 0.0, 0.0]
    mid_vol = [0.0, 0.0, 0.0]
    lo = [x, y, z]
    hi = [x, y, z]
    n_mid = (3 * n) // 4
    diverged = -1
    done = 0
    for i in range(n):
        j00, j01, j02 = l0, l1, l2
        j10, j11, j12 = l3, l4, l5
        j20, j21, j22 = l6, l7, l8 - 2.0 * z

        # Gram-Schmidt on the image of the frame
        w = []
        for col in range(3):
            qc = q[col]
            w.append([j00 * qc[0] + j01 * qc[1] + j02 * qc[2],
                      j10 * qc[0] + j11 * qc[1] + j12 * qc[2],
                      j20 * qc[0] + j21 * qc[1] + j22 * qc[2]])
        for col in range(3):
            wc = w[col]
            for prev in range(col):
                qp = q[prev]
                p = qp[0] * wc[0] + qp[1] * wc[1] + qp[2] * wc[2]
                wc[0] -= p * qp[0]
                wc[1] -= p * qp[1]
                wc[2] -= p * qp[2]
            r = math.sqrt(wc[0] * wc[0] + wc[1] * wc[1] + wc[2] * wc[2])
            s_qr[col] += _log(r)
            if r > 0.0:
                q[col] = [wc[0] / r, wc[1] / r, wc[2] / r]

        # growth of a vector, a bivector (via cofactors) and the volume
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
        r = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        s_vol[0] += _log(r)
        if r > 0.0:
            v0, v1, v2 = u0 / r, u1 / r, u2 / r

        b0 = c00 * a0 + c01 * a1 + c02 * a2
        b1 = c10 * a0 + c11 * a1 + c12 * a2
        b2 = c20 * a0 + c21 * a1 + c22 * a2
        r = math.sqrt(b0 * b0 + b1 * b1 + b2 * b2)
        s_vol[1] += _log(r)
        if r > 0.0:
            a0, a1, a2 = b0 / r, b1 / r, b2 / r

        s_vol[2] += _log(abs(det))

        nx = l0 * x + l1 * y + l2 * z
        ny = l3 * x + l4 * y + l5 * z
        nz = l6 * x + l7 * y + l8 * z + c - z * z
        x, y, z = nx, ny, nz
        done = i + 1
        if not (abs(x) <= escape and abs(y) <= escape and abs(z) <= escape):
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
            mid_qr = list(s_qr)
            mid_vol = list(s_vol)

    return {
        "qr": np.array(s_qr),
        "vol": np.array(s_vol),
        "qr_mid": np.array(mid_qr),
        "vol_mid": np.array(mid_vol),
        "n_mid": n_mid,
        "bbox": np.array([lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]]),
        "state": np.array([x, y, z]),
        "diverged_at": diverged,
        "n_done": done,
    }
