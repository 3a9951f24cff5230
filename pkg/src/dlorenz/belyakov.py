"""Powers of the 2x2 block [[lam, 1], [mu2, lam]].

Its eigenvalues lam +- sqrt(mu2) are real for mu2 > 0 (saddle) and complex
for mu2 < 0 (saddle-focus); mu2 = 0 is the collision. Functions here accept
floats or mpfr values.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _num

K_MAX = 10_000
NEAR_PARABOLIC = 1e-10


@dataclass(frozen=True)
class BelyakovBlock:
    lam: float
    mu2: float

    def __post_init__(self):
        if not abs(self.lam) < 1:
            raise ValueError("need |lambda| < 1")

    def matrix(self):
        return np.array([[self.lam, 1.0], [self.mu2, self.lam]], dtype=object if _num.is_mp(self.lam, self.mu2) else float)

    @property
    def det(self):
        return self.lam * self.lam - self.mu2

    def eigenvalues(self):
        lam, mu2 = complex(self.lam), complex(self.mu2)
        r = np.sqrt(mu2)
        return lam + r, lam - r


@dataclass(frozen=True)
class Phase:
    phi: float
    branch: str  # "hyperbolic", "parabolic" or "elliptic"


def phase(block: BelyakovBlock) -> Phase:
    lam, mu2 = block.lam, block.mu2
    if mu2 > 0:
        if mu2 >= lam * lam:
            raise ValueError(
                f"mu2={float(mu2)} >= lambda^2={float(lam * lam)}: an eigenvalue leaves the unit disc"
            )
        return Phase(_num.atanh(_num.sqrt(mu2) / lam), "hyperbolic")
    if mu2 == 0:
        return Phase(0 * lam, "parabolic")
    # two-argument form keeps phi continuous through lam = 0
    return Phase(-_num.atan2(_num.sqrt(-mu2), lam), "elliptic")


def _check_k(k):
    if k < 0 or int(k) != k:
        raise ValueError("k must be a non-negative integer")
    if k > K_MAX:
        raise ValueError(f"k={k} exceeds the cap {K_MAX}")


def ck(block: BelyakovBlock, k: int):
    _check_k(k)
    ph = phase(block)
    if ph.branch == "elliptic":
        return _num.cos(k * ph.phi)
    if ph.branch == "parabolic":
        return 1 + 0 * block.lam
    x = k * ph.phi
    return (_num.exp(x) + _num.exp(-x)) / 2


def sk(block: BelyakovBlock, k: int):
    _check_k(k)
    ph = phase(block)
    mu2 = block.mu2
    if ph.branch == "elliptic":
        return -_num.sin(k * ph.phi) / _num.sqrt(-mu2)
    if ph.branch == "parabolic":
        return k / block.lam
    x = k * ph.phi
    return (_num.exp(x) - _num.exp(-x)) / 2 / _num.sqrt(mu2)


def a1_pow_compact(block: BelyakovBlock, k: int):
    """rho^k [[C_k, S_k], [mu2 S_k, C_k]] with rho = sqrt(lam^2 - mu2).

    For mu2 >= 0 and lam < 0 the hyperbolic angle only carries |lam|, so the
    sign lam^k / |lam|^k is restored explicitly.
    """
    c, s = ck(block, k), sk(block, k)
    rho_k = _num.sqrt(block.det) ** k
    if block.mu2 >= 0 and block.lam < 0 and k % 2 == 1:
        rho_k = -rho_k
    return ((rho_k * c, rho_k * s), (rho_k * block.mu2 * s, rho_k * c))


def power_coefficients(block: BelyakovBlock, k: int):
    """(P, Q) with A^k = P*I + Q*N, N = [[0, 1], [mu2, 0]]."""
    _check_k(k)
    lam, mu2 = block.lam, block.mu2
    if abs(mu2) < NEAR_PARABOLIC:
        # binomial expansion in N (N^2 = mu2 I) kept to first order in mu2
        P = lam ** k + (math.comb(k, 2) * lam ** (k - 2) * mu2 if k >= 2 else 0)
        Q = (k * lam ** (k - 1) if k >= 1 else 0 * lam) + (
            math.comb(k, 3) * lam ** (k - 3) * mu2 if k >= 3 else 0
        )
        return P, Q
    if mu2 > 0:
        r = _num.sqrt(mu2)
        e1, e2 = (lam + r) ** k, (lam - r) ** k
        return (e1 + e2) / 2, (e1 - e2) / (2 * r)
    # complex pair: rho^k (cos k phi, -sin k phi / sqrt(-mu2))
    ph = phase(block)
    rho_k = _num.sqrt(block.det) ** k
    return rho_k * _num.cos(k * ph.phi), -rho_k * _num.sin(k * ph.phi) / _num.sqrt(-mu2)


def a1_pow(block: BelyakovBlock, k: int):
    """k-th power of the block as a 2x2 array (object dtype for mpfr input)."""
    P, Q = power_coefficients(block, k)
    dtype = object if _num.is_mp(P, Q) else float
    return np.array([[P, Q], [block.mu2 * Q, P]], dtype=dtype)


def naive_pow(block: BelyakovBlock, k: int):
    """Reference: literal repeated multiplication."""
    _check_k(k)
    A = block.matrix()
    out = np.eye(2, dtype=A.dtype)
    if A.dtype == object:
        out = out * (1 + 0 * block.lam)
    for _ in range(k):
        out = out @ A
    return out


DEFAULT_LAMBDAS = (0.3, 0.5, 0.9)


def default_mu2s(lam):
    return (-0.3, -1e-6, 0.0, 1e-6, 0.3 * lam * lam)


@dataclass
class PowerCheck:
    lam: float
    mu2: float
    k: int
    deviation: float


def compare_powers(lambdas=DEFAULT_LAMBDAS, mu2s=None, k_max=60, bits=128):
    """Closed form against repeated multiplication on a (lam, mu2, k) grid.

    mu2s: values, or a callable lam -> values (default_mu2s when None).
    bits=None evaluates in float64; otherwise both sides are computed from
    the decimal parameters in mpfr at that precision.
    Returns one PowerCheck per (lam, mu2), holding the worst k.
    """
    mu2s = default_mu2s if mu2s is None else mu2s
    out = []
    for lam in lambdas:
        values = mu2s(lam) if callable(mu2s) else mu2s
        for mu2 in values:
            if mu2 >= lam * lam:
                raise ValueError(f"mu2={mu2:g} >= lambda^2={lam * lam:g}: outside the saddle regime")
            worst = PowerCheck(lam, mu2, 0, 0.0)
            if bits:
                with _num.precision(bits):
                    block = BelyakovBlock(_num.mp(repr(float(lam))), _num.mp(repr(float(mu2))))
                    devs = _deviations(block, k_max)
            else:
                devs = _deviations(BelyakovBlock(float(lam), float(mu2)), k_max)
            for k, d in enumerate(devs):
                if d > worst.deviation:
                    worst = PowerCheck(lam, mu2, k, d)
            out.append(worst)
    return out


def _deviations(block, k_max):
    devs = []
    naive = naive_pow(block, 0)
    A = block.matrix()
    for k in range(k_max + 1):
        if k:
            naive = naive @ A
        diff = a1_pow(block, k) - naive
        devs.append(float(max(abs(v) for v in diff.ravel())))
    return devs
