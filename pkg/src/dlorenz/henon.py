"""The three-dimensional Henon map (x, y, z) -> (y, z, M1 + B x + M2 y - z^2)."""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

ESCAPE = 1e6


class Diverged(ArithmeticError):
    """An iterate left the finite range."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonInvertible(ValueError):
    pass


class State3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class HenonParams:
    M1: float
    M2: float
    B: float

    def __post_init__(self):
        for name in ("M1", "M2", "B"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def invertible(self):
        return self.B != 0.0

    def coefficients(self):
        """Kernel layout: linear part row-major, then the constant."""
        return np.array([0.0, 1.0, 0.0, 0.0, 0.0, 1.0, self.B, self.M2, 0.0, self.M1])


@dataclass(frozen=True)
class QuadraticMap:
    """s' = L s + (0, 0, c - z^2).

    Covers the Henon map and the rescaled return maps, whose linear part
    picks up small extra couplings.
    """

    L: tuple
    c: float

    def coefficients(self):
        return np.array([float(v) for row in self.L for v in row] + [float(self.c)])

    def __call__(self, s):
        L = np.asarray(self.L, dtype=float)
        out = L @ np.asarray(s, dtype=float)
        out[2] += self.c - s[2] ** 2
        return out


@dataclass(frozen=True)
class FixedPointInfo:
    point: State3
    multipliers: tuple
    jacobian_det: float
    multiplicity: int = 1


def step(params: HenonParams, s) -> State3:
    x, y, z = s
    out = State3(y, z, params.M1 + params.B * x + params.M2 * y - z * z)
    if not all(math.isfinite(v) for v in out):
        raise Diverged("non-finite iterate")
    return out


def inverse_step(params: HenonParams, s) -> State3:
    if params.B == 0.0:
        raise NonInvertible("map is not invertible for B = 0")
    x, y, z = s
    return State3((z - params.M1 - params.M2 * x + y * y) / params.B, x, y)


def jacobian(params: HenonParams, s):
    return np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [params.B, params.M2, -2.0 * s[2]]])


def multipliers_at(params: HenonParams, t):
    # characteristic polynomial of the Jacobian at (t, t, t)
    roots = np.roots([1.0, 2.0 * t, -params.M2, -params.B])
    # a double root comes back split by ~sqrt(eps); the mean of the pair
    # is accurate to rounding
    roots = np.sort_complex(roots)
    for i in range(2):
        a, b = roots[i], roots[i + 1]
        if abs(a.imag) < 1e-12 and abs(b.imag) < 1e-12 and abs(a - b) < 1e-7:
            roots[i] = roots[i + 1] = 0.5 * (a.real + b.real)
    return tuple(sorted((complex(r) for r in roots), key=lambda r: (r.real, r.imag)))


def fixed_points(params: HenonParams, double_tol=1e-12):
    p = 1.0 - params.B - params.M2
    disc = p * p + 4.0 * params.M1
    if disc < -double_tol:
        return []
    if abs(disc) <= double_tol:
        ts = [(-p / 2.0, 2)]
    else:
        r = math.sqrt(disc)
        # stable pair of roots, avoiding cancellation
        q = -0.5 * (p + math.copysign(r, p)) if p != 0.0 else 0.5 * r
        t1 = q
        t2 = -params.M1 / q if q != 0.0 else -q
        ts = [(t, 1) for t in sorted((t1, t2))]
    return [
        FixedPointInfo(State3(t, t, t), multipliers_at(params, t), params.B, mult)
        for t, mult in ts
    ]


def _vieta(target):
    rho = np.asarray(target, dtype=complex)
    s1 = rho.sum()
    s2 = rho[0] * rho[1] + rho[0] * rho[2] + rho[1] * rho[2]
    s3 = rho.prod()
    return s1, s2, s3


def find_degenerate_point(target_multipliers) -> HenonParams:
    """Parameters of a map having a fixed point with the given multipliers."""
    rho = np.asarray(target_multipliers, dtype=complex)
    if rho.shape != (3,):
        raise ValueError("need exactly three multipliers")
    if not np.allclose(np.sort_complex(rho), np.sort_complex(rho.conj()), atol=1e-12):
        raise ValueError("multipliers must be closed under conjugation")
    s1, s2, s3 = _vieta(rho)
    if max(abs(s1.imag), abs(s2.imag), abs(s3.imag)) > 1e-12:
        raise ValueError("no real fixed point realises these multipliers")
    t = -s1.real / 2.0
    M2 = -s2.real
    B = s3.real
    M1 = t * t + (1.0 - B - M2) * t

    # polish (t, M1, M2, B) on the fixed-point equation and the
    # characteristic polynomial evaluated at every target multiplier
    def residual(v):
        t_, m1, m2, b = v
        out = [t_ * t_ + (1.0 - b - m2) * t_ - m1]
        for r in rho:
            val = r ** 3 + 2.0 * t_ * r ** 2 - m2 * r - b
            out += [val.real, val.imag]
        return out

    v0 = np.array([t, M1, M2, B])
    sol = optimize.least_squares(residual, v0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if np.max(np.abs(residual(sol.x))) < np.max(np.abs(residual(v0))):
        t, M1, M2, B = sol.x
    return HenonParams(float(M1), float(M2), float(B))


def henon2d_step(M1, M2, s):
    x2, y = s
    return (y, M1 + M2 * x2 - y * y)


def henon2d_jacobian(M1, M2, s):
    return np.array([[0.0, 1.0], [M2, -2.0 * s[1]]])


def as_quadratic(model) -> QuadraticMap:
    if isinstance(model, QuadraticMap):
        return model
    c = model.coefficients()
    return QuadraticMap(tuple(tuple(c[3 * r:3 * r + 3]) for r in range(3)), c[9])


def quadratic_fixed_points(model):
    """Fixed points of s' = L s + (0, 0, c - z^2) with their multipliers.

    Writing r for the z-coordinate, s = (I - L)^-1 e3 (c - r^2), so
    kappa r^2 + r - kappa c = 0 with kappa = [(I - L)^-1]_33.
    """
    q = as_quadratic(model)
    L = np.asarray(q.L, dtype=float)
    try:
        col = np.linalg.solve(np.eye(3) - L, np.array([0.0, 0.0, 1.0]))
    except np.linalg.LinAlgError:
        return []
    kappa = col[2]
    if abs(kappa) < 1e-300:
        rs = [q.c * 0.0]
    else:
        disc = 1.0 + 4.0 * kappa * kappa * q.c
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        rs = [(-1.0 + sq) / (2.0 * kappa), (-1.0 - sq) / (2.0 * kappa)]
    out = []
    for r in rs:
        p = col * (q.c - r * r)
        J = L.copy()
        J[2, 2] -= 2.0 * p[2]
        out.append((p, np.linalg.eigvals(J)))
    return out
