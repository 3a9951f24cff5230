"""First-return maps near a homoclinic/heteroclinic tangency and their
rescaling to the three-dimensional Henon map.

The return map is composed numerically from the local and global maps of a
family, in multiple precision: the constant term of the rescaled map is
the difference of quantities that are about gamma^(2k) times larger, so
double precision cannot resolve it beyond k ~ 8.

Coordinates used here:

* raw: (x1, x2, y) at the entry of the local map near O;
* state: a chart in which the hooks-off return map reads
  x' = K + G x + g z,  z' = m + h.x + e z + Q z^2;
* rescaled: X = diag(alpha1, alpha2)^-1 E (x - x*), Y = (z - z*) / beta,
  in which the return map is close to
  (X1, X2, Y) -> (t X1 + X2, s X1 + u X2 + Y, M1 + B X1 + M2 X2 - Y^2).
"""
import csv
import math
from dataclasses import dataclass
from typing import Optional

import gmpy2
import numpy as np

from . import _num
from .belyakov import power_coefficients
from .family import (
    ConvergenceError,
    ModelFamily,
    MuVector,
    check_nondegeneracy,
    global_T1,
    global_T12,
    global_T21,
    local_forward_saddle,
    local_power_saddle_focus,
    realize,
    saddle_focus_cross,
)
from .henon import HenonParams, QuadraticMap

K0 = 5
J0 = 1
MAX_SOLVER_ITER = 50
PRODUCT_WINDOW = (0.5, 2.0)
CSV_COLUMNS = ["case", "k", "j", "mu1", "mu2", "mu3", "M1", "M2", "B", "dev_C0", "dev_C1"]


class AdmissibilityError(ValueError):
    pass


class BranchError(ValueError):
    pass


class ScalingError(ArithmeticError):
    pass


class InfeasibleTarget(ValueError):
    pass


@dataclass(frozen=True)
class ReturnMapConfig:
    family: ModelFamily
    k: int
    j: Optional[int] = None
    mu: MuVector = MuVector()
    k0: int = K0
    j0: int = J0

    def validate(self):
        if self.k < self.k0:
            raise AdmissibilityError(f"k={self.k} below the admissible floor {self.k0}")
        if self.family.heteroclinic:
            if self.j is None or self.j < self.j0:
                raise AdmissibilityError(f"case {self.family.case} needs j >= {self.j0}, got {self.j}")


def working_bits(family: ModelFamily, k, j=None, mu2=0.0):
    """Precision that keeps the rescaled coefficients accurate far past float64."""
    loc = family.local1
    rho = math.sqrt(max(float(loc.block.lam) ** 2 - float(mu2), 1e-300))
    growth = k * math.log2(max(abs(float(loc.gamma)), 1 / rho, 2.0))
    if family.heteroclinic:
        l2 = family.local2
        growth += (j or 0) * math.log2(max(abs(float(l2.gamma2)), 1 / abs(float(l2.nu2)), 2.0))
    return int(128 + 4 * growth)


# -- small multiple-precision linear algebra --------------------------------

def _det3(m):
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def _solve3(m, r):
    """Cramer's rule; fine for the well-conditioned 3x3 systems used here."""
    d = _det3(m)
    out = []
    for col in range(3):
        mc = [[r[i] if c == col else m[i][c] for c in range(3)] for i in range(3)]
        out.append(_det3(mc) / d)
    return out


def _to_mp(v):
    if isinstance(v, np.ndarray):
        return np.array([gmpy2.mpfr(e) if not isinstance(e, gmpy2.mpfr) else e for e in v.ravel()],
                        dtype=object).reshape(v.shape)
    if isinstance(v, gmpy2.mpfr):
        return v
    if isinstance(v, str):
        return gmpy2.mpfr(v)
    return gmpy2.mpfr(float(v)) if not isinstance(v, int) else gmpy2.mpfr(v)


# -- the composed map --------------------------------------------------------

class ReturnMap:
    """Exact numerical composition of the configured legs.

    Construct through compose_return_map. Every evaluator runs in this
    map's working precision and accepts scalars or numpy object arrays.
    """

    def __init__(self, cfg: ReturnMapConfig, bits: Optional[int] = None):
        cfg.validate()
        rep = check_nondegeneracy(cfg.family)
        if not rep.ok:
            raise ValueError(f"family fails non-degeneracy checks: {', '.join(rep.failed())}")
        self.cfg = cfg
        self.case = cfg.family.case
        self.k = cfg.k
        self.j = cfg.j if cfg.family.heteroclinic else None
        self.bits = bits or working_bits(cfg.family, cfg.k, self.j, cfg.mu.mu2)
        with self.context():
            self.family = cfg.family.map_numbers(_to_mp)
            mu = MuVector(_to_mp(cfg.mu.mu1), _to_mp(cfg.mu.mu2), _to_mp(cfg.mu.mu3))
            self.mu = mu
            self.loc1 = realize(self.family, mu)
            self.loc2 = self.family.local2
            self.mu1 = mu.mu1

    def context(self):
        return _num.precision(self.bits)

    # raw forward map ------------------------------------------------------
    def legs(self, x1, x2, y):
        """All intermediate points of one return, keyed by leg name."""
        with self.context():
            x1, x2, y = _to_mp(x1), _to_mp(x2), _to_mp(y)
            out = {}
            xk, yk = local_power_saddle_focus(self.loc1, self.k, (x1, x2), y)
            out["T0^k"] = (xk[0], xk[1], yk)
            if self.case == "I":
                out["T1"] = global_T1(self.family.t1, xk, yk, self.mu1)
                return out
            u0 = global_T12(self.family.t12, xk, yk, self.mu1)
            out["T12"] = u0
            uj, vj = local_forward_saddle(self.loc2, self.j, (u0[0], u0[1]), u0[2])
            out["T20^j"] = (uj[0], uj[1], vj)
            out["T21"] = global_T21(self.family.t21, uj, vj, self.mu1)
            return out

    def __call__(self, x1, x2, y):
        legs = self.legs(x1, x2, y)
        return legs["T1"] if self.case == "I" else legs["T21"]

    def jacobian(self, point, h=None):
        """Central finite-difference Jacobian (3x3 object array) at a raw point."""
        with self.context():
            p = [_to_mp(v) for v in point]
            h = h or gmpy2.mpfr(2) ** (-(self.bits // 3))
            J = np.empty((3, 3), dtype=object)
            for col in range(3):
                hp = list(p)
                hm = list(p)
                hp[col] = p[col] + h
                hm[col] = p[col] - h
                fp, fm = self(*hp), self(*hm)
                for row in range(3):
                    J[row, col] = (fp[row] - fm[row]) / (2 * h)
            return J

    def leg_determinant_product(self, point):
        """det of the composition as the product of the legs' determinants."""
        with self.context():
            legs = self.legs(*point)
            loc = self.loc1
            det_loc = (loc.block.lam ** 2 - loc.block.mu2) ** self.k * loc.gamma ** self.k
            if self.case == "I":
                g = self.family.t1
                dq = legs["T0^k"][2] - g.q_in
                return det_loc * _global_det(g, dq)
            g12, g21 = self.family.t12, self.family.t21
            d12 = _global_det(g12, legs["T0^k"][2] - g12.q_in)
            d21 = _global_det(g21, legs["T20^j"][2] - g21.q_in)
            l2 = self.loc2
            det2 = (l2.nu1 * l2.nu2 * l2.gamma2) ** self.j
            return det_loc * d12 * det2 * d21

    # normal-state chart -----------------------------------------------------
    def to_state(self, x1, x2, y):
        with self.context():
            x1, x2, y = _to_mp(x1), _to_mp(x2), _to_mp(y)
            xk, yk = local_power_saddle_focus(self.loc1, self.k, (x1, x2), y)
            if self.case == "I":
                return x1, x2, yk - self.family.t1.q_in
            if self.case == "IIa":
                u0 = global_T12(self.family.t12, xk, yk, self.mu1)
                _, vj = local_forward_saddle(self.loc2, self.j, (u0[0], u0[1]), u0[2])
                return x1, x2, vj - self.family.t21.q_in
            g21 = self.family.t21
            s = yk / self.loc1.gamma ** self.k
            return x1 - g21.b[0] / g21.d * s, x2 - g21.b[1] / g21.d * s, yk - self.family.t12.q_in

    def from_state(self, p1, p2, z):
        with self.context():
            p1, p2, z = _to_mp(p1), _to_mp(p2), _to_mp(z)
            if self.case == "I":
                yk = self.family.t1.q_in + z
                _, y0 = saddle_focus_cross(self.loc1, self.k, (p1, p2), yk)
                return p1, p2, y0
            if self.case == "IIb":
                yk = self.family.t12.q_in + z
                g21 = self.family.t21
                s = yk / self.loc1.gamma ** self.k
                x1, x2 = p1 + g21.b[0] / g21.d * s, p2 + g21.b[1] / g21.d * s
                _, y0 = saddle_focus_cross(self.loc1, self.k, (x1, x2), yk)
                return x1, x2, y0
            return self._from_state_iia(p1, p2, z)

    def _from_state_iia(self, x1, x2, z):
        # find y_k whose image after T12 and T20^j has v_j = v- + z
        g12, g21 = self.family.t12, self.family.t21
        vj = g21.q_in + z
        slope = g12.d * self.loc2.gamma2 ** self.j
        xk, _ = saddle_focus_cross(self.loc1, self.k, (x1, x2), g12.q_in)
        yk = g12.q_in + (vj / self.loc2.gamma2 ** self.j - g12.c[0] * xk[0] - g12.c[1] * xk[1]) / g12.d
        # rounding in y_k is amplified by the slope
        tol = 16 * _num.eps_like(gmpy2.mpfr(1)) * (abs(slope) * (1 + _maxabs(yk)) + _maxabs(vj))
        for _ in range(MAX_SOLVER_ITER):
            xk, _ = saddle_focus_cross(self.loc1, self.k, (x1, x2), yk)
            u0 = global_T12(g12, xk, yk, self.mu1)
            _, vj_now = local_forward_saddle(self.loc2, self.j, (u0[0], u0[1]), u0[2])
            r = vj_now - vj
            if _maxabs(r) <= tol:
                break
            yk = yk - r / slope
        else:
            raise ConvergenceError("chart inversion did not converge")
        _, y0 = saddle_focus_cross(self.loc1, self.k, (x1, x2), yk)
        return x1, x2, y0

    def cross(self, p1, p2, z):
        """The return map in state coordinates."""
        return self.to_state(*self(*self.from_state(p1, p2, z)))


def _maxabs(v):
    if isinstance(v, np.ndarray):
        return max(abs(e) for e in v.ravel())
    return abs(v)


def _global_det(g, dq):
    (a11, a12), (a21, a22) = g.a
    b1, b2 = g.b
    c1, c2 = g.c
    d = 2 * g.d * dq if g.tangent else g.d
    return (a11 * (a22 * d - b2 * c2) - a12 * (a21 * d - b2 * c1)
            + b1 * (a21 * c2 - a22 * c1))


def compose_return_map(cfg: ReturnMapConfig, bits=None) -> ReturnMap:
    return ReturnMap(cfg, bits)


# -- affine normal form (hooks off) -------------------------------------------

class Aff:
    """Affine function c0 + c1 x1 + c2 x2 + c3 z."""

    __slots__ = ("c",)

    def __init__(self, c):
        self.c = list(c)

    @classmethod
    def const(cls, v):
        return cls([v, 0, 0, 0])

    def __add__(self, o):
        if isinstance(o, Aff):
            return Aff([a + b for a, b in zip(self.c, o.c)])
        return Aff([self.c[0] + o] + self.c[1:])

    __radd__ = __add__

    def __sub__(self, o):
        return self + (-1) * o

    def __rsub__(self, o):
        return (-1) * self + o

    def __mul__(self, s):
        return Aff([a * s for a in self.c])

    __rmul__ = __mul__

    def __truediv__(self, s):
        return Aff([a / s for a in self.c])


def _dot2(c, v):
    return c[0] * v[0] + c[1] * v[1]


def _mat2(m, v):
    return (m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1])


@dataclass
class NormalForm:
    """x' = K + G x + g z, z' = m + h.x + e z + Q z^2 (hooks off, exact)."""

    K: tuple
    G: tuple
    g: tuple
    m: object
    h: tuple
    e: object
    Q: object


def _nf_from_affs(xbar, zbar, Q):
    K = (xbar[0].c[0], xbar[1].c[0])
    G = ((xbar[0].c[1], xbar[0].c[2]), (xbar[1].c[1], xbar[1].c[2]))
    g = (xbar[0].c[3], xbar[1].c[3])
    return NormalForm(K, G, g, zbar.c[0], (zbar.c[1], zbar.c[2]), zbar.c[3], Q)


def normal_form(rm: ReturnMap) -> NormalForm:
    """Closed-form state-coordinate coefficients of the hooks-off return map."""
    fam, k, j = rm.family, rm.k, rm.j
    loc = rm.loc1
    with rm.context():
        P, Qc = power_coefficients(loc.block, k)
        mu2 = loc.block.mu2
        Pm = ((P, Qc), (mu2 * Qc, P))
        gk = loc.gamma ** k
        x = (Aff([0, 1, 0, 0]), Aff([0, 0, 1, 0]))
        z = Aff([0, 0, 0, 1])
        if fam.case == "I":
            g = fam.t1
            xk = _mat2(Pm, x)
            xbar = tuple(g.p_out[i] + _dot2(g.a[i], xk) + g.b[i] * z for i in range(2))
            zbar = gk * (rm.mu1 + _dot2(g.c, xk)) - g.q_in
            return _nf_from_affs(xbar, zbar, gk * g.d)
        g12, g21, l2 = fam.t12, fam.t21, rm.loc2
        g2j = l2.gamma2 ** j
        nu = (l2.nu1 ** j, l2.nu2 ** j)
        if fam.case == "IIa":
            xk = _mat2(Pm, x)
            w = ((z + g21.q_in) / g2j - _dot2(g12.c, xk)) / g12.d
            u0 = [g12.p_out[i] + _dot2(g12.a[i], xk) + g12.b[i] * w for i in range(2)]
            uj = (nu[0] * u0[0], nu[1] * u0[1])
            xbar = tuple(g21.p_out[i] + _dot2(g21.a[i], uj) + g21.b[i] * z for i in range(2))
            wbar = gk * (rm.mu1 + _dot2(g21.c, uj)) - g12.q_in
            zbar = g2j * (_dot2(g12.c, _mat2(Pm, xbar)) + g12.d * wbar) - g21.q_in
            return _nf_from_affs(xbar, zbar, g2j * g12.d * gk * g21.d)
        # IIb
        s = (z + g12.q_in) / gk
        x0 = (x[0] + g21.b[0] / g21.d * s, x[1] + g21.b[1] / g21.d * s)
        xk = _mat2(Pm, x0)
        u0 = [g12.p_out[i] + _dot2(g12.a[i], xk) + g12.b[i] * z for i in range(2)]
        uj = (nu[0] * u0[0], nu[1] * u0[1])
        A = _reduced_matrix(g21)
        xbar = tuple(g21.p_out[i] + _dot2(A[i], uj) for i in range(2))
        zz = g2j * (rm.mu1 + _dot2(g12.c, xk)) - g21.q_in
        zbar = gk * (_dot2(g21.c, uj) + g21.d * zz) - g12.q_in
        return _nf_from_affs(xbar, zbar, gk * g21.d * g2j * g12.d)


def _reduced_matrix(g):
    """a - b c^T / d for a transversal global map."""
    return tuple(tuple(g.a[i][c] - g.b[i] * g.c[c] / g.d for c in range(2)) for i in range(2))


@dataclass
class HenonChart:
    """Affine change to rescaled coordinates.

    state = (x*, z*) + (C (alpha1 X1, alpha2 X2), beta Y)
    """

    x_star: tuple
    z_star: object
    C: tuple
    alpha1: object
    alpha2: object
    beta: object
    mode: str = "henon"

    def to_state(self, X1, X2, Y):
        a1 = self.alpha1 * X1
        a2 = self.alpha2 * X2
        return (self.x_star[0] + self.C[0][0] * a1 + self.C[0][1] * a2,
                self.x_star[1] + self.C[1][0] * a1 + self.C[1][1] * a2,
                self.z_star + self.beta * Y)

    def from_state(self, p1, p2, z):
        d1, d2 = p1 - self.x_star[0], p2 - self.x_star[1]
        (c11, c12), (c21, c22) = self.C
        det = c11 * c22 - c12 * c21
        w1 = (c22 * d1 - c12 * d2) / det
        w2 = (-c21 * d1 + c11 * d2) / det
        return w1 / self.alpha1, w2 / self.alpha2, (z - self.z_star) / self.beta


def _chart_from_linear(x_star, z_star, G, g, h, Q, mode):
    """Rescaling that puts the linear part (G, g, h) in Henon form."""
    if g[1] == 0:
        raise ScalingError("degenerate coupling g2 = 0")
    r = g[0] / g[1]
    Einv = ((1, r), (0, 1))
    E = ((1, -r), (0, 1))
    Gp = _mul2(_mul2(E, G), Einv)
    hp = (h[0], h[0] * r + h[1])
    beta = -1 / Q
    alpha2 = beta * g[1]
    C = Einv
    if mode == "henon":
        alpha1 = Gp[0][1] * alpha2
    else:
        # remove the X1 term from the last equation, equal scales
        c = hp[0] / hp[1]
        F2inv = ((1, 0), (-c, 1))
        C = _mul2(Einv, F2inv)
        alpha1 = alpha2
    for name, v in (("alpha1", alpha1), ("alpha2", alpha2), ("beta", beta)):
        if abs(v) < 1e-300:
            raise ScalingError(f"{name} = {float(v):.3g} underflows; use a smaller k")
    return HenonChart(tuple(x_star), z_star, C, alpha1, alpha2, beta, mode)


def _mul2(a, b):
    return tuple(tuple(sum(a[i][t] * b[t][c] for t in range(2)) for c in range(2)) for i in range(2))


def _nf_shift(nf: NormalForm):
    z_star = -nf.e / (2 * nf.Q)
    rhs = (nf.K[0] + nf.g[0] * z_star, nf.K[1] + nf.g[1] * z_star)
    (g11, g12), (g21, g22) = nf.G
    a, b, c, d = 1 - g11, -g12, -g21, 1 - g22
    det = a * d - b * c
    x_star = ((d * rhs[0] - b * rhs[1]) / det, (-c * rhs[0] + a * rhs[1]) / det)
    m_shift = nf.m + _dot2(nf.h, x_star) + nf.e * z_star + nf.Q * z_star * z_star - z_star
    return x_star, z_star, m_shift


def normal_form_params(nf: NormalForm, mode="henon"):
    """Exact rescaled coefficients of the hooks-off map: dict with M1, M2, B, t, s, u."""
    x_star, z_star, m_shift = _nf_shift(nf)
    chart = _chart_from_linear(x_star, z_star, nf.G, nf.g, nf.h, nf.Q, mode)
    C = chart.C
    # linear part in rescaled coordinates
    Cinv = _inv2(C)
    Gr = _mul2(_mul2(Cinv, nf.G), C)
    hC = (nf.h[0] * C[0][0] + nf.h[1] * C[1][0], nf.h[0] * C[0][1] + nf.h[1] * C[1][1])
    a1, a2, beta = chart.alpha1, chart.alpha2, chart.beta
    return dict(
        M1=m_shift / beta,
        B=hC[0] * a1 / beta,
        M2=hC[1] * a2 / beta,
        t=Gr[0][0],
        one=Gr[0][1] * a2 / a1,
        s=Gr[1][0] * a1 / a2,
        u=Gr[1][1],
        chart=chart,
    )


def _inv2(m):
    (a, b), (c, d) = m
    det = a * d - b * c
    return ((d / det, -b / det), (-c / det, a / det))


# -- predicted parameters -------------------------------------------------------

@dataclass
class RescaledParams:
    M1: object
    M2: object
    B: object
    sin_term: object
    L_fitted: object
    psi: object = None
    prefactor: object = None
    B_normal_form: object = None

    def as_henon(self):
        return HenonParams(float(self.M1), float(self.M2), float(self.B))


def _leading_amplitude(rm: ReturnMap):
    """(prefactor, L1, L2) of the leading oscillating term of M2."""
    fam, k, j = rm.family, rm.k, rm.j
    loc = rm.loc1
    lam, mu2 = loc.block.lam, loc.block.mu2
    rho_k = _num.sqrt(lam * lam - mu2) ** k
    gk = loc.gamma ** k
    root = _num.sqrt(-mu2)
    if fam.case == "I":
        g = fam.t1
        b1, b2 = g.b
        c1, c2 = g.c
        pref = b2 * rho_k * gk
        r = b1 / b2
        return pref, c1 * r + c2, -(c1 + c2 * r * mu2) / root
    l2 = rm.loc2
    nuj = (l2.nu1 * l2.gamma2) ** j
    g12, g21 = fam.t12, fam.t21
    if fam.case == "IIa":
        A11 = g12.a[0][0] - g12.b[0] * g12.c[0] / g12.d
        A12 = g12.a[0][1] - g12.b[0] * g12.c[1] / g12.d
        r = g21.b[0] / g21.b[1]
        c3 = g21.c[0]
        pref = g21.b[1] * g12.d * rho_k * gk * nuj
        return pref, c3 * (A11 * r + A12), -c3 * (A11 + A12 * r * mu2) / root
    A = _reduced_matrix(g21)
    r = A[0][0] / A[1][0]
    c1, c2 = g12.c
    pref = g12.b[0] * g21.d * A[1][0] * rho_k * gk * nuj
    return pref, c1 * r + c2, -(c1 + c2 * r * mu2) / root


def _leading_B(rm: ReturnMap):
    loc = rm.loc1
    det = loc.block.lam ** 2 - loc.block.mu2
    B = rm.family.jacobian_product() * (det * loc.gamma) ** rm.k
    if rm.family.heteroclinic:
        l2 = rm.loc2
        B = B * (l2.nu1 * l2.nu2 * l2.gamma2) ** rm.j
    return B


def predicted_rescaled_params(cfg: ReturnMapConfig, rm: Optional[ReturnMap] = None) -> RescaledParams:
    """Rescaled Henon parameters predicted from the family coefficients.

    M1 and M2 are the exact hooks-off coefficients; B is the leading
    Jacobian product. sin_term is M2 / (prefactor * L), so it vanishes
    exactly where M2 does.
    """
    rm = rm or compose_return_map(cfg)
    with rm.context():
        if rm.loc1.block.mu2 >= 0:
            raise BranchError("mu2 >= 0: the return map has no Henon limit; use mu2_positive_diagnostic")
        nf = normal_form(rm)
        p = normal_form_params(nf)
        pref, L1, L2 = _leading_amplitude(rm)
        L = _num.sqrt(L1 * L1 + L2 * L2)
        psi = _num.atan2(L1, L2)
        return RescaledParams(p["M1"], p["M2"], _leading_B(rm), p["M2"] / (pref * L), L, psi, pref, p["B"])


def _m2_exact(family, k, j, mu2, mu3, bits):
    rm = compose_return_map(ReturnMapConfig(family, k, j, MuVector(0, mu2, mu3)), bits=bits)
    with rm.context():
        return normal_form_params(normal_form(rm))["M2"]


def find_mu2_zero(family: ModelFamily, k, branch_index=1, j=None, mu3=0.0, window=None, per_zero=16):
    """mu2 < 0 at the branch_index-th zero (counted from mu2 = 0) of the
    oscillating coefficient of M2.

    The scan runs over the rotation angle phi in (0, atan(sqrt(window)/lam)),
    i.e. mu2 in (-window, 0); window defaults to lam^2.
    """
    lam = abs(float(family.local1.block.lam))
    base = float(family.local1.block.mu2)
    window = window if window is not None else lam * lam
    bits = working_bits(family, k, j, -window)
    with _num.precision(bits):
        lam_mp = abs(gmpy2.mpfr(family.local1.block.lam))
        base_mp = gmpy2.mpfr(family.local1.block.mu2)

        def mu2_of(phi):
            t = lam_mp * gmpy2.tan(phi)
            return -t * t - base_mp

        def f(phi):
            return _m2_exact(family, k, j, mu2_of(phi), mu3, bits)

        phi_max = gmpy2.atan(gmpy2.sqrt(gmpy2.mpfr(window)) / lam_mp)
        n = max(8, int(per_zero * k * float(phi_max) / math.pi) + 1)
        grid = [phi_max * i / n for i in range(1, n + 1)]
        found = 0
        prev_phi, prev_val = grid[0], f(grid[0])
        for phi in grid[1:]:
            val = f(phi)
            if prev_val == 0 or (prev_val > 0) != (val > 0):
                found += 1
                if found == branch_index:
                    root = _bisect(f, prev_phi, phi, prev_val, val, bits)
                    return mu2_of(root)
            prev_phi, prev_val = phi, val
    raise BranchError(
        f"only {found} zero(s) of the M2 coefficient for mu2 in ({-window - base:.4g}, {-base:.4g}); "
        f"branch {branch_index} requested"
    )


def _bisect(f, a, b, fa, fb, bits):
    if fa == 0:
        return a
    width = gmpy2.mpfr(2) ** (-(bits - 24))
    for _ in range(bits + 8):
        mid = (a + b) / 2
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
        if b - a <= width * abs(mid):
            break
    return a if abs(fa) < abs(fb) else b


# -- rescaled map and comparison -----------------------------------------------

class RescaledReturnMap:
    """Return map in rescaled coordinates, built numerically from the
    composed map (no use of the closed-form normal form)."""

    def __init__(self, rm: ReturnMap, mode="henon"):
        self.rm = rm
        self.mode = mode
        with rm.context():
            self.chart = self._find_chart()

    def _fd_step(self):
        return gmpy2.mpfr(2) ** (-(self.rm.bits // 3))

    def _initial_state(self):
        # the hooks-off closed form is a good starting point; Newton below
        # converges to the shift of the map actually composed
        x_star, z_star, _ = _nf_shift(normal_form(self.rm))
        return [x_star[0], x_star[1], z_star]

    def _linearization(self, p):
        """(S(p), D S(p), d2 S3 / dz2) by central differences."""
        S = self.rm.cross
        h = self._fd_step()
        f0 = S(*p)
        D = [[None] * 3 for _ in range(3)]
        fz = None
        for col in range(3):
            pp, pm = list(p), list(p)
            pp[col] += h
            pm[col] -= h
            fp, fm = S(*pp), S(*pm)
            for row in range(3):
                D[row][col] = (fp[row] - fm[row]) / (2 * h)
            if col == 2:
                fz = (fp[2] - 2 * f0[2] + fm[2]) / (h * h)
        return f0, D, fz

    def _find_chart(self):
        # shift: x* fixed by the x-part, dz'/dz = 0 at z*
        p = self._initial_state()
        h = self._fd_step()
        chart = None
        for _ in range(30):
            f0, D, fzz = self._linearization(p)
            Q = fzz / 2
            R = [f0[0] - p[0], f0[1] - p[1], D[2][2]]
            # Jacobian of R: x-part from D, last row from second differences
            JR = [[D[0][0] - 1, D[0][1], D[0][2]],
                  [D[1][0], D[1][1] - 1, D[1][2]],
                  [self._d_dz_partial(p, 0, h), self._d_dz_partial(p, 1, h), fzz]]
            step = _solve3(JR, R)
            p = [p[i] - step[i] for i in range(3)]
            G = ((D[0][0], D[0][1]), (D[1][0], D[1][1]))
            g = (D[0][2], D[1][2])
            hvec = (D[2][0], D[2][1])
            chart = _chart_from_linear(p[:2], p[2], G, g, hvec, Q, self.mode)
            small = gmpy2.mpfr(2) ** (-(self.rm.bits // 3))
            if (abs(step[0]) <= small * abs(chart.alpha1) and abs(step[1]) <= small * abs(chart.alpha2)
                    and abs(step[2]) <= small * abs(chart.beta)):
                break
        else:
            raise ConvergenceError("rescaling shift did not converge")
        f0, D, fzz = self._linearization(p)
        G = ((D[0][0], D[0][1]), (D[1][0], D[1][1]))
        return _chart_from_linear(p[:2], p[2], G, (D[0][2], D[1][2]), (D[2][0], D[2][1]), fzz / 2, self.mode)

    def _d_dz_partial(self, p, col, h):
        # d/dp_col of dS3/dz, mixed central difference
        S = self.rm.cross

        def dz(q):
            qp, qm = list(q), list(q)
            qp[2] += h
            qm[2] -= h
            return (S(*qp)[2] - S(*qm)[2]) / (2 * h)

        pp, pm = list(p), list(p)
        pp[col] += h
        pm[col] -= h
        return (dz(pp) - dz(pm)) / (2 * h)

    def __call__(self, X1, X2, Y):
        with self.rm.context():
            X1, X2, Y = _to_mp(X1), _to_mp(X2), _to_mp(Y)
            state = self.chart.to_state(X1, X2, Y)
            return self.chart.from_state(*self.rm.cross(*state))

    def jacobian(self, X1, X2, Y, h=None):
        """Central-difference Jacobian; returns a 3x3 nested list of values/arrays."""
        with self.rm.context():
            h = h or gmpy2.mpfr(2) ** (-(self.rm.bits // 4))
            X = [_to_mp(X1), _to_mp(X2), _to_mp(Y)]
            J = [[None] * 3 for _ in range(3)]
            for col in range(3):
                Xp, Xm = list(X), list(X)
                Xp[col] = X[col] + h
                Xm[col] = X[col] - h
                fp, fm = self(*Xp), self(*Xm)
                for row in range(3):
                    J[row][col] = (fp[row] - fm[row]) / (2 * h)
            return J

    def quadratic_map(self) -> QuadraticMap:
        """Float64 quadratic map L X + (0, 0, c - Y^2) read off at the origin."""
        with self.rm.context():
            f0 = self(0, 0, 0)
            J = self.jacobian(0, 0, 0)
            L = tuple(tuple(float(J[r][c]) for c in range(3)) for r in range(3))
            return QuadraticMap(L, float(f0[2]))

    def raw_point(self, X1=0, X2=0, Y=0):
        with self.rm.context():
            return self.rm.from_state(*self.chart.to_state(_to_mp(X1), _to_mp(X2), _to_mp(Y)))


@dataclass
class DeviationReport:
    case: str
    k: int
    j: Optional[int]
    mu: MuVector
    predicted: RescaledParams
    dev_C0: float
    dev_C1: float
    B_measured: float
    alpha1: float
    alpha2: float
    beta: float
    bits: int
    rescaled: Optional[QuadraticMap] = None

    def row(self):
        return {
            "case": self.case, "k": self.k, "j": "" if self.j is None else self.j,
            "mu1": _fmt(self.mu.mu1), "mu2": _fmt(self.mu.mu2), "mu3": _fmt(self.mu.mu3),
            "M1": _fmt(self.predicted.M1), "M2": _fmt(self.predicted.M2), "B": _fmt(self.predicted.B),
            "dev_C0": repr(float(self.dev_C0)), "dev_C1": repr(float(self.dev_C1)),
        }


def _fmt(v):
    if isinstance(v, gmpy2.mpfr):
        return format(v, ".30g")
    return repr(float(v))


def _lattice(w, n):
    ax = [gmpy2.mpfr(w) * (2 * i - (n - 1)) / (n - 1) for i in range(n)] if n > 1 else [gmpy2.mpfr(0)]
    g = np.array(ax, dtype=object)
    X1, X2, Y = np.meshgrid(g, g, g, indexing="ij")
    return X1.ravel(), X2.ravel(), Y.ravel()


def rescale_and_compare(cfg: ReturnMapConfig, box_half_width=2.0, samples=17) -> DeviationReport:
    """Sup-norm C0 and C1 distance between the rescaled return map and the
    Henon map with the predicted parameters, on a lattice over [-w, w]^3."""
    rm = compose_return_map(cfg)
    pred = predicted_rescaled_params(cfg, rm)
    R = RescaledReturnMap(rm)
    with rm.context():
        X1, X2, Y = _lattice(box_half_width, samples)
        img = R(X1, X2, Y)
        M1, M2, B = pred.M1, pred.M2, pred.B
        ref = (X2, Y, M1 + B * X1 + M2 * X2 - Y * Y)
        c0 = max(_maxabs(img[i] - ref[i]) for i in range(3))
        J = R.jacobian(X1, X2, Y)
        Jref = [[0, 1, 0], [0, 0, 1], [B, M2, -2 * Y]]
        c1 = max(_maxabs(J[r][c] - Jref[r][c]) for r in range(3) for c in range(3))
        B_meas = _det3(rm.jacobian(R.raw_point()))
        ch = R.chart
        return DeviationReport(
            rm.case, rm.k, rm.j, cfg.mu, pred, float(c0), float(c1), float(B_meas),
            float(ch.alpha1), float(ch.alpha2), float(ch.beta), rm.bits, R.quadratic_map(),
        )


def write_ladder_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


# -- parameter placement -------------------------------------------------------

def jacobian_product(family: ModelFamily, k, j=None):
    """|(det A1 gamma)^k (nu1 nu2 gamma2)^j| at mu = 0."""
    loc = family.local1
    v = abs((float(loc.block.lam) ** 2 - float(loc.block.mu2)) * float(loc.gamma)) ** k
    if family.heteroclinic:
        l2 = family.local2
        v *= abs(float(l2.nu1 * l2.nu2 * l2.gamma2)) ** j
    return v


def balance_j(family: ModelFamily, k, window=PRODUCT_WINDOW):
    """j >= 1 keeping the Jacobian product inside the window (closest to 1)."""
    best = None
    for j in range(1, 4 * k + 8):
        p = jacobian_product(family, k, j)
        if window[0] <= p <= window[1]:
            score = abs(math.log(p))
            if best is None or score < best[0]:
                best = (score, j)
    if best is None:
        raise AdmissibilityError(f"no j keeps the Jacobian product in {window} for k={k}")
    return best[1]


def _mu3_for_B(family: ModelFamily, k, j, B_target):
    loc = family.local1
    lam, mu2b = loc.block.lam, loc.block.mu2
    det0 = lam * lam - mu2b
    sign_g = -1 if loc.gamma < 0 else 1
    base = family.jacobian_product() * sign_g ** k
    if family.heteroclinic:
        l2 = family.local2
        base = base * (l2.nu1 * l2.nu2 * l2.gamma2) ** j
    ratio = B_target / base
    if ratio <= 0:
        raise InfeasibleTarget(
            f"B={float(B_target):g} has the wrong sign: the Jacobian at k={k} has the sign of {float(base):g}"
        )
    size = ratio ** (gmpy2.mpfr(1) / k)  # |det(mu) * gamma(mu)|
    if family.case == "I":
        return abs(det0 * loc.gamma) - size
    l2 = family.local2
    j1_0 = abs(det0 * loc.gamma)
    j2 = abs(l2.nu1 * l2.nu2 * l2.gamma2)
    if (size > 1) != (j1_0 > 1):
        raise InfeasibleTarget("target B would move the saddle-focus Jacobian across 1")
    return -gmpy2.log(size / j1_0) / gmpy2.log(j2)


def _secant(f, x0, x1, target, tol, what):
    f0, f1 = f(x0) - target, f(x1) - target
    for _ in range(MAX_SOLVER_ITER):
        if abs(f1) <= tol:
            return x1
        if f1 == f0:
            break
        x0, x1, f0 = x1, x1 - f1 * (x1 - x0) / (f1 - f0), f1
        f1 = f(x1) - target
    if abs(f1) <= tol:
        return x1
    raise ConvergenceError(f"{what}: no convergence in {MAX_SOLVER_ITER} iterations")


def solve_mu_for_target(family: ModelFamily, k, j, target: HenonParams, branch_index=1,
                        mu2_window=None) -> MuVector:
    """Parameters mu putting the predicted rescaled map at target.

    mu3 comes from B in closed form, mu2 from M2 by a secant search started
    at the chosen zero of the oscillating coefficient, mu1 from M1 (which is
    affine in mu1).
    """
    if family.heteroclinic and (j is None or j < J0):
        raise AdmissibilityError("heteroclinic cases need j >= 1")
    j = j if family.heteroclinic else None
    bits = working_bits(family, k, j, -(mu2_window or float(family.local1.block.lam) ** 2))
    with _num.precision(bits):
        fam = family.map_numbers(_to_mp)
        mu3 = _mu3_for_B(fam, k, j, _to_mp(target.B))
        mu2_0 = find_mu2_zero(family, k, branch_index, j, mu3, window=mu2_window)

    with _num.precision(bits):
        lam = abs(_to_mp(family.local1.block.lam))
        base = _to_mp(family.local1.block.mu2)

        def mu2_of(phi):
            t = lam * gmpy2.tan(phi)
            return -t * t - base

        def m2(phi):
            return _m2_exact(family, k, j, mu2_of(phi), mu3, bits)

        phi0 = gmpy2.atan(gmpy2.sqrt(-(mu2_0 + base)) / lam)
        tol = gmpy2.mpfr(2) ** (-(bits // 2))
        phi = _secant(m2, phi0, phi0 * (1 + gmpy2.mpfr(1e-6)), _to_mp(target.M2), tol, "mu2")
        mu2 = mu2_of(phi)

        def m1(mu1):
            rm = compose_return_map(ReturnMapConfig(family, k, j, MuVector(mu1, mu2, mu3)), bits=bits)
            with rm.context():
                return normal_form_params(normal_form(rm))["M1"]

        # affine in mu1: one secant step is exact, a second cleans rounding
        g_k = abs(realize(fam, MuVector(0, mu2, mu3)).gamma) ** k
        mu1 = _secant(m1, gmpy2.mpfr(0), 1 / (g_k * g_k), _to_mp(target.M1), tol, "mu1")
        mu = MuVector(mu1, mu2, mu3)

        cfg = ReturnMapConfig(family, k, j, mu)
        pred = predicted_rescaled_params(cfg, compose_return_map(cfg, bits=bits))
        for name, want, got in (("M1", target.M1, pred.M1), ("M2", target.M2, pred.M2), ("B", target.B, pred.B)):
            if abs(float(got) - want) > 0.01 * max(abs(want), 1.0):
                raise ConvergenceError(f"{name}: reached {float(got):g}, target {want:g}")
        return mu


def ladder_mu(family: ModelFamily, k, j=None, branch_index=1):
    """mu at the branch zero of M2 with M1 = 0 and mu3 = 0."""
    j = j if family.heteroclinic else None
    mu2 = find_mu2_zero(family, k, branch_index, j)
    bits = working_bits(family, k, j, mu2)
    with _num.precision(bits):
        def m1(mu1):
            rm = compose_return_map(ReturnMapConfig(family, k, j, MuVector(mu1, mu2, 0)), bits=bits)
            with rm.context():
                return normal_form_params(normal_form(rm))["M1"]

        g_k = abs(realize(family.map_numbers(_to_mp), MuVector(0, mu2, 0)).gamma) ** k
        mu1 = _secant(m1, gmpy2.mpfr(0), 1 / (g_k * g_k), 0, gmpy2.mpfr(2) ** (-(bits // 2)), "mu1")
    return MuVector(mu1, mu2, gmpy2.mpfr(0))


# -- the mu2 > 0 side ---------------------------------------------------------

@dataclass
class Mu2PositiveReport:
    k: int
    j: Optional[int]
    mu2: float
    x1_sup: float
    M1: float
    M2: float
    effective: QuadraticMap = None
    rescaled: QuadraticMap = None


def mu2_positive_diagnostic(cfg: ReturnMapConfig, box_half_width=2.0, samples=9) -> Mu2PositiveReport:
    """Rescaling with equal X scales on the saddle side (mu2 > 0).

    The X1 direction contracts like k lam^k and the remaining (X2, Y)
    dynamics is a 2D Henon map whose Jacobian -M2 grows with k. The
    reported M1 uses mu1 chosen so that the constant term vanishes.
    """
    if not float(cfg.mu.mu2) + float(cfg.family.local1.block.mu2) > 0:
        raise BranchError("the diagnostic needs mu2 > 0")
    j = cfg.j if cfg.family.heteroclinic else None

    def build(mu1):
        c = ReturnMapConfig(cfg.family, cfg.k, j, MuVector(mu1, cfg.mu.mu2, cfg.mu.mu3), cfg.k0, cfg.j0)
        return compose_return_map(c)

    rm = build(cfg.mu.mu1)
    with rm.context():
        def m1(mu1):
            r = build(mu1)
            with r.context():
                return normal_form_params(normal_form(r), mode="mu2pos")["M1"]

        g_k = abs(rm.loc1.gamma) ** cfg.k
        mu1 = _secant(m1, gmpy2.mpfr(0), 1 / (g_k * g_k), 0, gmpy2.mpfr(2) ** (-(rm.bits // 2)), "mu1")
    rm = build(mu1)
    R = RescaledReturnMap(rm, mode="mu2pos")
    with rm.context():
        X1, X2, Y = _lattice(box_half_width, samples)
        img = R(X1, X2, Y)
        x1_sup = float(_maxabs(img[0]))
        q = R.quadratic_map()
    M2 = q.L[2][1]
    M1 = q.c
    # 2D Henon map (X2, Y) -> (Y, M1 + M2 X2 - Y^2) with X1 kept as a neutral spectator
    eff = QuadraticMap(((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, M2, 0.0)), M1)
    return Mu2PositiveReport(cfg.k, j, float(cfg.mu.mu2), x1_sup, M1, M2, eff, q)


def fit_contraction(reports, lam):
    """Envelope fit x1_sup <= C k |lam|^k.

    Returns (C, spread) where C is the smallest constant that bounds every
    report and spread = 1 - min(ratio) / C measures how steady the ratio is.
    """
    ratios = np.array([r.x1_sup / (r.k * abs(float(lam)) ** r.k) for r in reports])
    C = float(ratios.max())
    return C, float(1 - ratios.min() / C)
