"""Concrete families of maps with a homoclinic or heteroclinic tangency.

A family is a local map near a saddle-focus O (and, in the heteroclinic
cases, a local map near a saddle O2) plus global maps along the connecting
orbits. Everything here is plain arithmetic on floats, mpfr values or numpy
arrays of either, so the same code drives float tests and the
high-precision return-map compositions.

Vectors are passed as tuples (x1, x2).
"""
import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import _num
from .belyakov import BelyakovBlock, power_coefficients

NEIGHBORHOOD_RADIUS = 1.0
NONDEGENERACY_TOL = 1e-8
MAX_SOLVE_ITER = 100


class DomainError(ValueError):
    """A point left the neighbourhood where a global map is valid."""


class ConfigError(ValueError):
    pass


class ConvergenceError(ArithmeticError):
    pass


# -- perturbation hooks ----------------------------------------------------

def _bump(*coords):
    r2 = 1
    for c in coords:
        r2 = r2 + c * c
    return 1 / r2


@dataclass(frozen=True)
class LocalHooks:
    """Bounded perturbations of a local map and their decay rates.

    ``contract`` returns the pair added to the contracting coordinates,
    ``expand`` the scalar added to the expanding one; both are scaled by
    ``rate_c**n`` and ``rate_e**-n`` after n iterations.
    """

    rate_c: float
    rate_e: float
    contract: Callable
    expand: Callable


def bump_hooks(amplitude, rate_c, rate_e):
    """Smooth hooks bounded by ``amplitude`` with bounded derivatives."""

    def contract(p1, p2, q):
        b = amplitude * _bump(p1, p2, q)
        return b, -b

    def expand(p1, p2, q):
        return amplitude * _bump(p1, p2, q)

    return LocalHooks(rate_c, rate_e, contract, expand)


def constant_hooks(value, rate_c, rate_e):
    def contract(p1, p2, q):
        return value + 0 * p1, 0 * p1

    def expand(p1, p2, q):
        return value + 0 * p1

    return LocalHooks(rate_c, rate_e, contract, expand)


def quadratic_remainder(scale):
    """Higher-order terms for a global map, in the shifted inputs (p1, p2, dq)."""

    def rem(p1, p2, dq):
        r = p1 * p1 + p1 * p2 + p2 * p2 + (p1 + p2) * dq
        return scale * (r + dq * dq), scale * (r - dq * dq), scale * (r + dq * dq * dq)

    return rem


# -- local maps -------------------------------------------------------------

@dataclass(frozen=True)
class LocalSaddleFocus:
    block: BelyakovBlock
    gamma: float
    hooks: Optional[LocalHooks] = None

    def __post_init__(self):
        if not abs(self.gamma) > 1:
            raise ValueError("need |gamma| > 1")
        h = self.hooks
        if h is not None:
            if not 0 < h.rate_c < abs(self.block.lam):
                raise ValueError("hook rate for x must lie in (0, |lambda|)")
            if not h.rate_e > abs(self.gamma):
                raise ValueError("hook rate for y must exceed |gamma|")


@dataclass(frozen=True)
class LocalSaddle:
    nu1: float
    nu2: float
    gamma2: float
    hooks: Optional[LocalHooks] = None

    def __post_init__(self):
        if not abs(self.nu2) < abs(self.nu1) < 1:
            raise ValueError("need |nu2| < |nu1| < 1")
        if not abs(self.gamma2) > 1:
            raise ValueError("need |gamma2| > 1")
        h = self.hooks
        if h is not None:
            if not 0 < h.rate_c < abs(self.nu1):
                raise ValueError("hook rate for u must lie in (0, |nu1|)")
            if not h.rate_e > abs(self.gamma2):
                raise ValueError("hook rate for v must exceed |gamma2|")


def _max_abs(v):
    try:
        return max(abs(e) for e in v.ravel())
    except AttributeError:
        return abs(v)


def _solve_expanding(q0, gamma_n, back, q_guess):
    """Solve q0 = q_n / gamma_n + back(q_n) for q_n by fixed-point iteration."""
    qn = q_guess
    for _ in range(MAX_SOLVE_ITER):
        new = gamma_n * (q0 - back(qn))
        scale = 1 + _max_abs(new)
        if not math.isfinite(float(scale)):
            raise ConvergenceError("local map solve diverged")
        if _max_abs(new - qn) <= _num.eps_like(scale) * scale:
            return new
        qn = new
    raise ConvergenceError(f"local map solve did not converge in {MAX_SOLVE_ITER} iterations")


def saddle_focus_cross(loc: LocalSaddleFocus, k, x0, yk):
    """(x0, y_k) -> (x_k, y_0), the form in which the local map is specified."""
    P, Q = power_coefficients(loc.block, k)
    mu2 = loc.block.mu2
    xk1 = P * x0[0] + Q * x0[1]
    xk2 = mu2 * Q * x0[0] + P * x0[1]
    y0 = yk / loc.gamma ** k
    h = loc.hooks
    if h is not None:
        e1, e2 = h.contract(x0[0], x0[1], yk)
        rc = h.rate_c ** k
        xk1, xk2 = xk1 + rc * e1, xk2 + rc * e2
        y0 = y0 + h.expand(x0[0], x0[1], yk) / h.rate_e ** k
    return (xk1, xk2), y0


def local_power_saddle_focus(loc: LocalSaddleFocus, k, x0, y0):
    """k iterations near the saddle-focus: (x0, y0) -> (x_k, y_k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    gk = loc.gamma ** k
    h = loc.hooks
    if h is None:
        yk = gk * y0
    else:
        re = h.rate_e ** k
        yk = _solve_expanding(y0, gk, lambda q: h.expand(x0[0], x0[1], q) / re, gk * y0)
    xk, _ = saddle_focus_cross(loc, k, x0, yk)
    return xk, yk


def local_power_saddle(loc: LocalSaddle, j, u0, vj):
    """(u0, v_j) -> (u_j, v_0) near the saddle O2; j = 0 is the identity."""
    if j < 0:
        raise ValueError("j must be >= 0")
    if j == 0:
        return (u0[0], u0[1]), vj
    u1 = loc.nu1 ** j * u0[0]
    u2 = loc.nu2 ** j * u0[1]
    v0 = vj / loc.gamma2 ** j
    h = loc.hooks
    if h is not None:
        e1, e2 = h.contract(u0[0], u0[1], vj)
        rc = h.rate_c ** j
        u1, u2 = u1 + rc * e1, u2 + rc * e2
        v0 = v0 + h.expand(u0[0], u0[1], vj) / h.rate_e ** j
    return (u1, u2), v0


def local_forward_saddle(loc: LocalSaddle, j, u0, v0):
    """(u0, v0) -> (u_j, v_j)."""
    if j == 0:
        return (u0[0], u0[1]), v0
    gj = loc.gamma2 ** j
    h = loc.hooks
    if h is None:
        vj = gj * v0
    else:
        re = h.rate_e ** j
        vj = _solve_expanding(v0, gj, lambda q: h.expand(u0[0], u0[1], q) / re, gj * v0)
    uj, _ = local_power_saddle(loc, j, u0, vj)
    return uj, vj


# -- global maps ------------------------------------------------------------

# which global maps carry the quadratic tangency term and the constant mu1
_TANGENT = {("I", "T1"): True, ("IIa", "T12"): False, ("IIa", "T21"): True,
            ("IIb", "T12"): True, ("IIb", "T21"): False}


@dataclass(frozen=True)
class GlobalCoeffs:
    """Taylor coefficients of a global map near its entry point.

    Inputs are (p, q) with p the contracting pair and q the expanding
    coordinate; ``p_out`` is the image anchor (x+ or u+) and ``q_in`` the
    entry anchor (y- or v-).
    """

    role: str  # "T1", "T12" or "T21"
    case: str  # "I", "IIa" or "IIb"
    a: tuple
    b: tuple
    c: tuple
    d: float
    p_out: tuple
    q_in: float
    hot_hooks: Optional[Callable] = None
    radius: float = NEIGHBORHOOD_RADIUS

    def __post_init__(self):
        if (self.case, self.role) not in _TANGENT:
            raise ConfigError(f"global map {self.role} does not belong to case {self.case}")

    @property
    def tangent(self):
        return _TANGENT[(self.case, self.role)]

    def jacobian_det(self):
        (a11, a12), (a21, a22) = self.a
        b1, b2 = self.b
        c1, c2 = self.c
        d = 0 if self.tangent else self.d
        return (a11 * (a22 * d - b2 * c2) - a12 * (a21 * d - b2 * c1)
                + b1 * (a21 * c2 - a22 * c1))


def _any_true(v):
    try:
        return bool(v.any())
    except AttributeError:
        return bool(v)


def global_map(g: GlobalCoeffs, p, q, mu1=0.0, leg=None):
    dq = q - g.q_in
    r2 = p[0] * p[0] + p[1] * p[1] + dq * dq
    if _any_true(r2 > g.radius * g.radius):
        raise DomainError(f"{leg or g.role}: input outside the neighbourhood of radius {float(g.radius)}")
    (a11, a12), (a21, a22) = g.a
    o1 = g.p_out[0] + a11 * p[0] + a12 * p[1] + g.b[0] * dq
    o2 = g.p_out[1] + a21 * p[0] + a22 * p[1] + g.b[1] * dq
    o3 = g.c[0] * p[0] + g.c[1] * p[1]
    if g.tangent:
        o3 = o3 + mu1 + g.d * dq * dq
    else:
        o3 = o3 + g.d * dq
    if g.hot_hooks is not None:
        r1, r2_, r3 = g.hot_hooks(p[0], p[1], dq)
        o1, o2, o3 = o1 + r1, o2 + r2_, o3 + r3
    return o1, o2, o3


def _require(g, role):
    if g.role != role:
        raise ConfigError(f"expected coefficients for {role}, got {g.role}")


def global_T1(g: GlobalCoeffs, xk, yk, mu1=0.0):
    _require(g, "T1")
    return global_map(g, xk, yk, mu1, leg="T1")


def global_T12(g: GlobalCoeffs, xk, yk, mu1=0.0):
    _require(g, "T12")
    return global_map(g, xk, yk, mu1, leg="T12")


def global_T21(g: GlobalCoeffs, uj, vj, mu1=0.0):
    _require(g, "T21")
    return global_map(g, uj, vj, mu1, leg="T21")


# -- families and parameters ------------------------------------------------

@dataclass(frozen=True)
class MuVector:
    mu1: object = 0.0
    mu2: object = 0.0
    mu3: object = 0.0

    def norm(self):
        return math.sqrt(float(self.mu1) ** 2 + float(self.mu2) ** 2 + float(self.mu3) ** 2)


@dataclass(frozen=True)
class ModelFamily:
    case: str
    local1: LocalSaddleFocus
    t1: Optional[GlobalCoeffs] = None
    local2: Optional[LocalSaddle] = None
    t12: Optional[GlobalCoeffs] = None
    t21: Optional[GlobalCoeffs] = None

    def __post_init__(self):
        if self.case == "I":
            if self.t1 is None:
                raise ConfigError("case I needs T1 coefficients")
        elif self.case in ("IIa", "IIb"):
            if None in (self.local2, self.t12, self.t21):
                raise ConfigError(f"case {self.case} needs the saddle and both global maps")
            for g in (self.t12, self.t21):
                if g.case != self.case:
                    raise ConfigError(f"{g.role} is tagged {g.case}, family is {self.case}")
        else:
            raise ConfigError(f"unknown case {self.case!r}")

    @property
    def heteroclinic(self):
        return self.case != "I"

    def global_maps(self):
        return (self.t1,) if self.case == "I" else (self.t12, self.t21)

    def jacobian_product(self):
        if self.case == "I":
            return self.t1.jacobian_det()
        return self.t12.jacobian_det() * self.t21.jacobian_det()

    def map_numbers(self, f):
        """Copy with every numeric coefficient passed through f (e.g. to mpfr)."""

        def tup(v):
            return tuple(tup(e) if isinstance(e, tuple) else f(e) for e in v)

        def hooks(h):
            if h is None:
                return None
            return dataclasses.replace(h, rate_c=f(h.rate_c), rate_e=f(h.rate_e))

        def glob(g):
            if g is None:
                return None
            return dataclasses.replace(g, a=tup(g.a), b=tup(g.b), c=tup(g.c), d=f(g.d),
                                       p_out=tup(g.p_out), q_in=f(g.q_in), radius=f(g.radius))

        l1 = self.local1
        l1 = LocalSaddleFocus(BelyakovBlock(f(l1.block.lam), f(l1.block.mu2)), f(l1.gamma), hooks(l1.hooks))
        l2 = self.local2
        if l2 is not None:
            l2 = LocalSaddle(f(l2.nu1), f(l2.nu2), f(l2.gamma2), hooks(l2.hooks))
        return ModelFamily(self.case, l1, glob(self.t1), l2, glob(self.t12), glob(self.t21))


def _jacobian1(family, mu2_total, gamma):
    lam = family.local1.block.lam
    return abs((lam * lam - mu2_total) * gamma)


def _jacobian2(family):
    l2 = family.local2
    return abs(l2.nu1 * l2.nu2 * l2.gamma2)


def _check_iic(j1, j2):
    if not ((j1 > 1 and j2 < 1) or (j1 < 1 and j2 > 1)):
        raise ValueError(
            f"one saddle must expand and the other contract volume: J1={float(j1)}, J2={float(j2)}"
        )


def realize(family: ModelFamily, mu: MuVector) -> LocalSaddleFocus:
    """Local map near O at parameter mu.

    mu2 is added to the block's base value; mu3 moves the expanding
    multiplier so that the volume functional shifts by exactly mu3.
    """
    loc = family.local1
    lam = loc.block.lam
    mu2_base = loc.block.mu2
    mu2 = mu2_base + mu.mu2
    det0 = lam * lam - mu2_base
    det = lam * lam - mu2
    if family.case == "I":
        size = abs(det0 * loc.gamma) - mu.mu3
    else:
        j2 = _jacobian2(family)
        size = abs(det0 * loc.gamma) * _num.exp(-mu.mu3 * _num.log(j2))
    if not size > 0:
        raise ValueError(f"mu3={float(mu.mu3)} leaves no positive Jacobian for the saddle-focus")
    gamma = size / det
    if loc.gamma < 0:
        gamma = -gamma
    return LocalSaddleFocus(BelyakovBlock(lam, mu2), gamma, loc.hooks)


def _functional(family, loc):
    j1 = _jacobian1(family, loc.block.mu2, loc.gamma)
    if family.case == "I":
        return 1 - j1
    j2 = _jacobian2(family)
    _check_iic(j1, j2)
    return -_num.log(j1) / _num.log(j2)


def mu3_of_family(family: ModelFamily, mu: Optional[MuVector] = None):
    """Volume functional of the family at mu.

    Case I: 1 - |det A1 * gamma|. Case II: S(f_mu) - S(f_0) with
    S = -ln J1 / ln J2.
    """
    loc = family.local1 if mu is None else realize(family, mu)
    if family.case == "I":
        return _functional(family, loc)
    return _functional(family, loc) - _functional(family, family.local1)


# -- non-degeneracy ---------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    passed: bool


@dataclass
class NondegeneracyReport:
    case: str
    checks: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]


def check_nondegeneracy(family: ModelFamily, tol=NONDEGENERACY_TOL) -> NondegeneracyReport:
    rep = NondegeneracyReport(family.case)

    def add(name, value):
        value = float(value)
        rep.checks.append(Check(name, value, abs(value) > tol))

    if family.case == "I":
        g = family.t1
        add("J_T1", g.jacobian_det())
        add("d", g.d)
        add("simple:b2", g.b[1])
        add("simple:c1", g.c[0])
        return rep
    g12, g21 = family.t12, family.t21
    add("J12", g12.jacobian_det())
    add("J21", g21.jacobian_det())
    add("d1", g12.d)
    add("d2", g21.d)
    if family.case == "IIa":
        add("no-orbit-flip:A11", g12.a[0][0] - g12.b[0] * g12.c[0] / g12.d)
        add("simple:b4c3", g21.b[1] * g21.c[0])
    else:
        add("simple:b1c1", g12.b[0] * g12.c[0])
        add("no-orbit-flip:A41", g21.a[1][0] - g21.b[1] * g21.c[0] / g21.d)
    return rep


# -- presets and configuration ----------------------------------------------

_A = ((1.0, 0.2), (0.1, 1.0))
_A2 = ((1.0, 0.3), (0.2, 1.0))

PRESET_VALUES = {
    "I": dict(case="I", **{"lambda": 0.55}, mu2=0.0, gamma=-1 / 0.3025,
              a11=1.0, a12=0.2, a21=0.1, a22=1.0, b1=0.3, b2=1.0, c1=1.0, c2=0.4, d=1.0,
              x1_plus=0.4, x2_plus=0.3, y_minus=0.5),
    "IIa": dict(case="IIa", **{"lambda": 0.55}, mu2=0.0, gamma=4.0, nu1=0.5, nu2=0.3, gamma2=4.0,
                a11=1.0, a12=0.2, a21=0.1, a22=1.0, b1=0.3, b2=1.0, c1=1.0, c2=0.4, d1=2.0,
                a31=1.0, a32=0.3, a41=0.2, a42=1.0, b3=0.4, b4=1.0, c3=1.0, c4=-0.5, d2=1.0,
                x1_plus=0.4, x2_plus=0.3, y_minus=0.5, u1_plus=0.4, u2_plus=0.3, v_minus=0.5),
    "IIb": dict(case="IIb", **{"lambda": 0.55}, mu2=0.0, gamma=4.0, nu1=0.5, nu2=0.3, gamma2=4.0,
                a11=1.0, a12=0.2, a21=0.1, a22=1.0, b1=0.3, b2=1.0, c1=1.0, c2=0.4, d1=1.0,
                a31=1.0, a32=0.3, a41=0.2, a42=1.0, b3=0.4, b4=1.0, c3=1.0, c4=-0.5, d2=2.0,
                x1_plus=0.4, x2_plus=0.3, y_minus=0.5, u1_plus=0.4, u2_plus=0.3, v_minus=0.5),
}

_HOOK_KEYS = {"hooks", "hook_amplitude", "lambda_hat", "gamma_hat", "nu_hat", "gamma2_hat",
              "global_remainder", "radius"}
_COMMON_KEYS = {"case", "lambda", "mu2", "gamma", "a11", "a12", "a21", "a22", "b1", "b2",
                "c1", "c2", "x1_plus", "x2_plus", "y_minus"} | _HOOK_KEYS
FAMILY_KEYS = {
    "I": _COMMON_KEYS | {"d"},
    "IIa": _COMMON_KEYS | {"nu1", "nu2", "gamma2", "d1", "d2", "a31", "a32", "a41", "a42",
                           "b3", "b4", "c3", "c4", "u1_plus", "u2_plus", "v_minus"},
}
FAMILY_KEYS["IIb"] = FAMILY_KEYS["IIa"]


def family_from_values(values: dict) -> ModelFamily:
    """Build a family from a flat mapping; missing keys fall back to the case preset."""
    case = values.get("case", "I")
    if case not in PRESET_VALUES:
        raise ConfigError(f"unknown case {case!r}")
    unknown = set(values) - FAMILY_KEYS[case]
    if unknown:
        raise ConfigError(f"unknown keys for case {case}: {', '.join(sorted(unknown))}")
    v = dict(PRESET_VALUES[case])
    v.update(values)
    for key, val in list(v.items()):
        if key not in ("case", "hooks"):
            try:
                v[key] = float(val)
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: not a number: {val!r}") from None

    hooks_on = str(v.get("hooks", "off")).lower() in ("on", "bump", "true", "yes", "1")
    amp = v.get("hook_amplitude", 0.1)
    lam, gamma = v["lambda"], v["gamma"]
    h1 = None
    if hooks_on:
        h1 = bump_hooks(amp, v.get("lambda_hat", 0.5 * abs(lam)), v.get("gamma_hat", 2.0 * abs(gamma)))
    rem = v.get("global_remainder", 0.0)
    hot = quadratic_remainder(rem) if rem else None
    radius = v.get("radius", NEIGHBORHOOD_RADIUS)
    try:
        loc1 = LocalSaddleFocus(BelyakovBlock(lam, v["mu2"]), gamma, h1)
        x_plus = (v["x1_plus"], v["x2_plus"])
        first = dict(a=((v["a11"], v["a12"]), (v["a21"], v["a22"])), b=(v["b1"], v["b2"]),
                     c=(v["c1"], v["c2"]), q_in=v["y_minus"], hot_hooks=hot, radius=radius)
        if case == "I":
            t1 = GlobalCoeffs("T1", "I", d=v["d"], p_out=x_plus, **first)
            return ModelFamily("I", loc1, t1=t1)
        h2 = None
        if hooks_on:
            h2 = bump_hooks(amp, v.get("nu_hat", 0.5 * abs(v["nu1"])),
                            v.get("gamma2_hat", 2.0 * abs(v["gamma2"])))
        loc2 = LocalSaddle(v["nu1"], v["nu2"], v["gamma2"], h2)
        t12 = GlobalCoeffs("T12", case, d=v["d1"], p_out=(v["u1_plus"], v["u2_plus"]), **first)
        t21 = GlobalCoeffs("T21", case, a=((v["a31"], v["a32"]), (v["a41"], v["a42"])),
                           b=(v["b3"], v["b4"]), c=(v["c3"], v["c4"]), d=v["d2"], p_out=x_plus,
                           q_in=v["v_minus"], hot_hooks=hot, radius=radius)
        return ModelFamily(case, loc1, local2=loc2, t12=t12, t21=t21)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def preset(case="I", **overrides) -> ModelFamily:
    return family_from_values(dict(PRESET_VALUES[case], **overrides))


def load_family(path, section="family") -> ModelFamily:
    """Read a family from an INI-style file (one [family] section)."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not cp.has_section(section):
        raise ConfigError(f"{path}: missing [{section}] section")
    return family_from_values(dict(cp.items(section)))
