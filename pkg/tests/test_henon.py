import cmath

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from dlorenz.henon import (Diverged, HenonParams, NonInvertible, QuadraticMap, find_degenerate_point,
                           fixed_points, henon2d_jacobian, henon2d_step, inverse_step, jacobian,
                           quadratic_fixed_points, step)

small = st.floats(-2.0, 2.0, allow_nan=False)
coord = st.floats(-3.0, 3.0, allow_nan=False)


@pytest.mark.parametrize("p, s, want", [
    ((1, 0, 0), (0, 0, 0), (0, 0, 1)),
    ((0, 0, 0), (0, 0, 0), (0, 0, 0)),
    ((0, 1, 1), (1, 1, 1), (1, 1, 1)),
])
def test_step_examples(p, s, want):
    assert step(HenonParams(*p), s) == want


def test_inverse_example_and_singular():
    assert inverse_step(HenonParams(1, 0, 1), (0, 0, 1)) == (0, 0, 0)
    with pytest.raises(NonInvertible):
        inverse_step(HenonParams(0, 0, 0), (0.3, 0.2, 0.1))
    assert not HenonParams(0, 0, 0).invertible


def test_nonfinite_params_rejected():
    with pytest.raises(ValueError):
        HenonParams(float("nan"), 0, 1)


def test_step_overflow_reports_divergence():
    with pytest.raises(Diverged):
        step(HenonParams(0, 0, 1), (0, 0, 1e200))


@given(small, small, st.floats(0.05, 2.0), st.booleans(), coord, coord, coord)
def test_inverse_undoes_step(m1, m2, b, neg, x, y, z):
    p = HenonParams(m1, m2, -b if neg else b)
    back = inverse_step(p, step(p, (x, y, z)))
    scale = 1 + abs(x) + abs(y) + z * z
    assert np.allclose(back, (x, y, z), atol=1e-12 * scale / b)


@given(small, small, small, coord, coord, coord)
def test_jacobian_matches_central_differences(m1, m2, b, x, y, z):
    p = HenonParams(m1, m2, b)
    s = np.array([x, y, z])
    h = 1e-6
    fd = np.empty((3, 3))
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        fd[:, c] = (np.array(step(p, s + e)) - np.array(step(p, s - e))) / (2 * h)
    assert np.allclose(jacobian(p, s), fd, atol=1e-8)
    assert np.linalg.det(jacobian(p, s)) == pytest.approx(b, abs=1e-12)


def test_fixed_points_of_zero_params():
    ts = sorted(f.point.x for f in fixed_points(HenonParams(0, 0, 0)))
    assert ts == [-1.0, 0.0]


@given(small, small, small)
def test_fixed_points_are_fixed_and_multipliers_are_eigenvalues(m1, m2, b):
    p = HenonParams(m1, m2, b)
    for fp in fixed_points(p):
        assert np.allclose(step(p, fp.point), fp.point, atol=1e-10 * (1 + abs(fp.point.x)) ** 2)
        if fp.multiplicity == 1:
            eig = np.linalg.eigvals(jacobian(p, fp.point))
            key = lambda r: (round(r.real, 6), round(r.imag, 6))
            assert np.allclose(sorted(eig, key=key), sorted(fp.multipliers, key=key), atol=1e-6)


@given(small, small, small)
def test_no_fixed_points_iff_negative_discriminant(m1, m2, b):
    p = HenonParams(m1, m2, b)
    disc = (1 - b - m2) ** 2 + 4 * m1
    assume(abs(disc) > 1e-9)
    assert (len(fixed_points(p)) == 0) == (disc < 0)


def _same_multiset(a, b, tol):
    b = list(b)
    for r in a:
        i = min(range(len(b)), key=lambda i: abs(b[i] - r))
        if abs(b[i] - r) > tol:
            return False
        b.pop(i)
    return True


@pytest.mark.parametrize("target, want", [
    ((-1, -1, 1), (-0.25, 1.0, 1.0)),
    ((-1, 1j, -1j), (1.75, -1.0, -1.0)),
    # Vieta gives t = 1/2, M2 = 1, B = -1, so M1 = t^2 + (1 - B - M2) t = -1/4
    ((1, 1, -1), (-0.25, 1.0, -1.0)),
])
def test_degenerate_points(target, want):
    p = find_degenerate_point(target)
    assert np.allclose((p.M1, p.M2, p.B), want, atol=1e-10)
    fps = fixed_points(p)
    assert any(_same_multiset(target, f.multipliers, 1e-8) for f in fps)


def test_degenerate_point_rejects_unpaired_complex():
    with pytest.raises(ValueError):
        find_degenerate_point((1j, 0.5, 0.2))


@given(st.floats(-0.95, -0.05), st.floats(0.05, 0.95), st.floats(0.05, 2.5))
def test_degenerate_point_round_trip(r1, r2, angle):
    # a real multiplier and a complex pair on the circle of radius r2
    target = (r1, r2 * cmath.exp(1j * angle), r2 * cmath.exp(-1j * angle))
    p = find_degenerate_point(target)
    assert any(_same_multiset(target, f.multipliers, 1e-8) for f in fixed_points(p))


def test_henon2d_examples():
    assert henon2d_step(0, 0, (0, 0)) == (0, 0)
    assert henon2d_step(1, 0, (5, 0)) == (0, 1)
    assert np.linalg.det(henon2d_jacobian(0.3, 0.7, (1.0, 2.0))) == pytest.approx(-0.7)


@given(small, small, small)
def test_quadratic_fixed_points_agree_for_henon(m1, m2, b):
    p = HenonParams(m1, m2, b)
    disc = (1 - b - m2) ** 2 + 4 * m1
    assume(abs(disc) > 1e-6 and abs(1 - b - m2) > 1e-3)
    a = sorted(f.point.x for f in fixed_points(p))
    q = sorted(pt[0] for pt, _ in quadratic_fixed_points(p))
    assert np.allclose(a, q, atol=1e-8 * (1 + max(map(abs, a), default=0)))


def test_quadratic_map_call_matches_step():
    p = HenonParams(0.1, 0.85, 0.7)
    q = QuadraticMap(((0, 1, 0), (0, 0, 1), (0.7, 0.85, 0)), 0.1)
    s = (0.3, -0.2, 0.5)
    assert np.allclose(q(s), step(p, s))
    assert np.array_equal(q.coefficients(), p.coefficients())
