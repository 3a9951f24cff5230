import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dlorenz import _pykernels, kernels
from dlorenz.henon import HenonParams, QuadraticMap, step

compiled = pytest.importorskip("dlorenz._kernels")


@given(st.floats(-0.3, 0.3), st.floats(0.5, 1.0), st.floats(-0.9, 0.9), st.integers(1, 3000))
def test_backends_bit_identical(m1, m2, b, n):
    coef = HenonParams(m1, m2, b).coefficients()
    s0 = np.array([0.1, 0.1, 0.1])
    p_out, p_div = _pykernels.orbit(coef, s0, 10, n, 1e6)
    c_out, c_div = compiled.orbit(coef, s0, 10, n, 1e6)
    assert p_div == c_div and np.array_equal(p_out, c_out)
    p = _pykernels.lyapunov(coef, s0, n, 1e6)
    c = compiled.lyapunov(coef, s0, n, 1e6)
    for key in ("qr", "vol", "bbox", "state"):
        assert np.array_equal(p[key], c[key])
    assert p["diverged_at"] == c["diverged_at"]


def test_orbit_matches_reference_step():
    p = HenonParams(0.0, 0.85, 0.7)
    pts, div = kernels.orbit(p.coefficients(), np.array([0.1, 0.1, 0.1]), 0, 50, 1e6)
    s = (0.1, 0.1, 0.1)
    for row in pts:
        s = step(p, s)
        assert np.allclose(row, s, rtol=0, atol=1e-12)


def test_general_quadratic_layout():
    q = QuadraticMap(((0.01, 1, 0), (0.02, 0, 1), (0.7, 0.85, 0.03)), 0.05)
    pts, _ = kernels.orbit(q.coefficients(), np.array([0.1, 0.2, 0.3]), 0, 3, 1e6)
    s = np.array([0.1, 0.2, 0.3])
    for row in pts:
        s = q(s)
        assert np.allclose(row, s, atol=1e-15)


def test_pure_backend_selected_by_environment():
    env = dict(os.environ, DLORENZ_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from dlorenz import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == "cython"
