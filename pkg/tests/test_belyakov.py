import math

import gmpy2
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dlorenz import _num
from dlorenz.belyakov import (K_MAX, BelyakovBlock, a1_pow, a1_pow_compact, ck, compare_powers, naive_pow,
                              phase, power_coefficients, sk)


def test_phase_examples():
    assert phase(BelyakovBlock(0.5, 0.0)) == phase(BelyakovBlock(0.5, 0.0))
    assert phase(BelyakovBlock(0.5, 0.0)).branch == "parabolic"
    assert phase(BelyakovBlock(0.5, 0.0)).phi == 0
    p = phase(BelyakovBlock(1e-12, -1.0))
    assert p.branch == "elliptic" and p.phi == pytest.approx(-math.pi / 2, abs=1e-10)
    p = phase(BelyakovBlock(0.5, 0.09))
    assert p.branch == "hyperbolic"
    assert p.phi == pytest.approx(math.atanh(0.6), rel=1e-14)
    assert math.tanh(p.phi) == pytest.approx(0.6)


def test_phase_outside_saddle_regime():
    with pytest.raises(ValueError):
        phase(BelyakovBlock(0.5, 0.25))


def test_block_needs_contraction():
    with pytest.raises(ValueError):
        BelyakovBlock(1.0, -0.1)


def test_ck_sk_examples():
    b = BelyakovBlock(0.5, 0.0)
    assert ck(b, 3) == 1 and sk(b, 3) == 6
    r = BelyakovBlock(0.0, -1.0)
    assert ck(r, 4) == pytest.approx(1.0) and sk(r, 4) == pytest.approx(0.0, abs=1e-15)


def test_ck_sk_continuous_across_collision():
    lam, eps, k = 0.5, 1e-8, 10
    up, down = BelyakovBlock(lam, eps), BelyakovBlock(lam, -eps)
    # cosh(k phi) - cos(k phi) ~ (k phi)^2 with phi ~ sqrt(eps)/lam
    assert ck(up, k) - ck(down, k) == pytest.approx(k * k * eps / lam ** 2, rel=1e-3)
    assert abs(sk(up, k) - sk(down, k)) <= 1e-4
    for b in (up, down):
        ref = naive_pow(b, k)
        rho_k = b.det ** (k / 2)
        assert ck(b, k) == pytest.approx(ref[0, 0] / rho_k, rel=1e-12)
        assert sk(b, k) == pytest.approx(ref[0, 1] / rho_k, rel=1e-10)


@pytest.mark.parametrize("lam, mu2, k, want", [
    (0.5, 0.0, 3, [[0.125, 0.75], [0.0, 0.125]]),
    (0.5, 0.25, 2, [[0.5, 1.0], [0.25, 0.5]]),
    (0.0, -1.0, 4, [[1.0, 0.0], [0.0, 1.0]]),
])
def test_a1_pow_examples(lam, mu2, k, want):
    assert np.allclose(a1_pow(BelyakovBlock(lam, mu2), k), want, atol=1e-15)


def test_k_bounds():
    b = BelyakovBlock(0.5, -0.1)
    with pytest.raises(ValueError):
        a1_pow(b, -1)
    with pytest.raises(ValueError):
        a1_pow(b, K_MAX + 1)
    assert np.allclose(a1_pow(b, 0), np.eye(2))


blocks = st.tuples(st.floats(-0.95, 0.95), st.floats(-0.9, 0.9)).filter(lambda t: t[1] < t[0] ** 2 * 0.999)


@given(blocks, st.integers(0, 40))
def test_closed_form_matches_repeated_product_in_mpfr(bl, k):
    with _num.precision(160):
        b = BelyakovBlock(gmpy2.mpfr(bl[0]), gmpy2.mpfr(bl[1]))
        diff = a1_pow(b, k) - naive_pow(b, k)
        scale = 1 + max(abs(v) for v in naive_pow(b, k).ravel())
        assert max(abs(v) for v in diff.ravel()) <= 1e-30 * scale


@given(blocks, st.integers(1, 40))
def test_compact_form_agrees(bl, k):
    lam, mu2 = bl
    if mu2 == 0 or abs(mu2) < 1e-10 or (mu2 > 0 and lam == 0):
        return
    b = BelyakovBlock(lam, mu2)
    c = np.array(a1_pow_compact(b, k), dtype=float)
    ref = naive_pow(b, k)
    assert np.allclose(c, ref, atol=1e-9 * (1 + np.abs(ref).max()))


@given(blocks, st.integers(0, 30), st.integers(0, 30))
def test_powers_compose(bl, i, j):
    b = BelyakovBlock(*bl)
    lhs = a1_pow(b, i + j)
    rhs = a1_pow(b, i) @ a1_pow(b, j)
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


@given(blocks, st.integers(0, 40))
def test_determinant_is_power_of_det(bl, k):
    b = BelyakovBlock(*bl)
    P, Q = power_coefficients(b, k)
    scale = P * P + abs(b.mu2) * Q * Q
    assert P * P - b.mu2 * Q * Q == pytest.approx(b.det ** k, abs=1e-13 * scale + 1e-300)


def test_default_grid_in_mpfr():
    worst = max(c.deviation for c in compare_powers())
    assert worst <= 1e-9


def test_float64_roundoff_is_reported_not_hidden():
    # for lam = 0.9, mu2 = 0.243 the larger eigenvalue is 1.39 and entries
    # reach 1e8 by k = 60; both evaluations round at that scale
    worst = max(compare_powers(bits=None), key=lambda c: c.deviation)
    assert worst.lam == 0.9 and worst.deviation > 1e-9


def test_compare_powers_rejects_mu2_above_lambda_sq():
    with pytest.raises(ValueError):
        compare_powers((0.5,), (0.5,))
