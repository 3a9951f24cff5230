import numpy as np
import pytest
from hypothesis import given, strategies as st

from dlorenz.belyakov import BelyakovBlock, naive_pow
from dlorenz.family import (PRESET_VALUES, ConfigError, ConvergenceError, DomainError, LocalSaddle,
                            LocalSaddleFocus, MuVector, bump_hooks, check_nondegeneracy, global_T1,
                            global_T12, global_T21, load_family, local_forward_saddle,
                            local_power_saddle, local_power_saddle_focus, mu3_of_family, preset, realize,
                            saddle_focus_cross)


def test_local_saddle_focus_linear_example():
    loc = LocalSaddleFocus(BelyakovBlock(0.5, 0.0), 3.0)
    xk, yk = local_power_saddle_focus(loc, 2, (1.0, 0.0), 1.0)
    assert np.allclose(xk, (0.25, 0.0)) and yk == 9.0


def test_local_saddle_example_and_identity():
    loc = LocalSaddle(0.5, 0.2, 4.0)
    u, v0 = local_power_saddle(loc, 3, (1.0, 1.0), 2.0)
    assert np.allclose(u, (0.125, 0.008)) and v0 == pytest.approx(2.0 / 64)
    assert local_power_saddle(loc, 0, (0.3, 0.4), 0.7) == ((0.3, 0.4), 0.7)


@given(st.floats(0.1, 0.9), st.floats(-0.5, 0.0), st.integers(1, 25),
       st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_hooks_off_matches_linear_iteration(lam, mu2, k, x1, x2, y0):
    loc = LocalSaddleFocus(BelyakovBlock(lam, mu2 * lam * lam), -3.0)
    xk, yk = local_power_saddle_focus(loc, k, (x1, x2), y0)
    ref = naive_pow(loc.block, k) @ np.array([x1, x2])
    assert np.allclose(xk, ref, atol=1e-12)
    assert yk == pytest.approx((-3.0) ** k * y0)


@given(st.integers(1, 12), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_hooked_local_map_is_consistent_with_cross_form(k, x1, x2, y0):
    loc = LocalSaddleFocus(BelyakovBlock(0.55, -0.05), 3.0, bump_hooks(0.1, 0.3, 6.0))
    xk, yk = local_power_saddle_focus(loc, k, (x1, x2), y0)
    xk2, y0_back = saddle_focus_cross(loc, k, (x1, x2), yk)
    assert np.allclose(xk, xk2, rtol=0, atol=1e-14)
    assert y0_back == pytest.approx(y0, abs=1e-12 * (1 + abs(yk) / 3.0 ** k))


@given(st.integers(1, 10), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_forward_saddle_inverts_cross_form(j, u1, u2, v0):
    loc = LocalSaddle(0.5, 0.3, 4.0, bump_hooks(0.05, 0.2, 8.0))
    uj, vj = local_forward_saddle(loc, j, (u1, u2), v0)
    uj2, v0_back = local_power_saddle(loc, j, (u1, u2), vj)
    assert np.allclose(uj, uj2, atol=1e-14)
    assert v0_back == pytest.approx(v0, abs=1e-12)


def test_hook_rate_validation():
    with pytest.raises(ValueError):
        LocalSaddleFocus(BelyakovBlock(0.5, 0.0), 3.0, bump_hooks(0.1, 0.6, 6.0))
    with pytest.raises(ValueError):
        LocalSaddleFocus(BelyakovBlock(0.5, 0.0), 3.0, bump_hooks(0.1, 0.3, 2.0))
    with pytest.raises(ValueError):
        LocalSaddle(0.3, 0.5, 4.0)


def test_expanding_solve_reports_non_convergence():
    # a hook so strong that the fixed-point iteration cannot contract
    from dlorenz.family import LocalHooks
    wild = LocalHooks(0.1, 3.5, lambda x1, x2, y: (0 * y, 0 * y), lambda x1, x2, y: 1e6 * y)
    loc = LocalSaddleFocus(BelyakovBlock(0.5, 0.0), 3.0, wild)
    with pytest.raises(ConvergenceError):
        local_power_saddle_focus(loc, 1, (0.1, 0.1), 0.1)


def test_global_maps_at_tangency():
    fam = preset("I")
    g = fam.t1
    out = global_T1(g, (0.0, 0.0), g.q_in, mu1=1e-3)
    assert np.allclose(out, (g.p_out[0], g.p_out[1], 1e-3))
    a = preset("IIa")
    assert global_T21(a.t21, (0.0, 0.0), a.t21.q_in, mu1=2e-3)[2] == pytest.approx(2e-3)
    b = preset("IIb")
    assert global_T12(b.t12, (0.0, 0.0), b.t12.q_in, mu1=-1e-3)[2] == pytest.approx(-1e-3)


def test_global_map_domain_and_role():
    fam = preset("I")
    with pytest.raises(DomainError, match="T1"):
        global_T1(fam.t1, (2.0, 0.0), 0.5)
    with pytest.raises(ConfigError):
        global_T12(fam.t1, (0.0, 0.0), 0.5)


@pytest.mark.parametrize("case", ["I", "IIa", "IIb"])
def test_presets_are_nondegenerate(case):
    fam = preset(case)
    assert check_nondegeneracy(fam).ok
    assert float(mu3_of_family(fam, MuVector())) == pytest.approx(0.0, abs=1e-12)


def test_degenerate_coefficients_are_flagged():
    assert "simple:b2" in check_nondegeneracy(preset("I", b2=0.0)).failed()
    assert "simple:c1" in check_nondegeneracy(preset("I", c1=0.0)).failed()
    v = PRESET_VALUES["IIa"]
    flip = preset("IIa", a11=v["b1"] * v["c1"] / v["d1"])
    assert "no-orbit-flip:A11" in check_nondegeneracy(flip).failed()


def test_mu3_examples():
    assert mu3_of_family(preset("I", **{"lambda": 0.5}, gamma=4.0)) == pytest.approx(0.0)
    assert mu3_of_family(preset("I", **{"lambda": 0.5}, gamma=4.2)) == pytest.approx(-0.05)
    assert mu3_of_family(preset("IIa"), MuVector(0.0, 0.0, 0.0)) == 0


@given(st.floats(-0.02, 0.0), st.floats(-0.05, 0.05))
def test_realize_moves_functional_by_mu3(mu2, mu3):
    # mu3 is defined so that the volume functional shifts by exactly mu3
    for case in ("I", "IIa"):
        fam = preset(case)
        shift = float(mu3_of_family(fam, MuVector(0.0, mu2, mu3))) - float(mu3_of_family(fam))
        assert shift == pytest.approx(mu3, abs=1e-12)
        assert np.sign(realize(fam, MuVector(0.0, mu2, mu3)).gamma) == np.sign(fam.local1.gamma)


def test_config_loading(tmp_path):
    p = tmp_path / "fam.ini"
    p.write_text("[family]\ncase = I\nb1 = 0.25\n")
    assert load_family(p).t1.b[0] == 0.25
    p.write_text("[family]\ncase = I\nnu1 = 0.5\n")
    with pytest.raises(ConfigError, match="nu1"):
        load_family(p)
    p.write_text("[other]\ncase = I\n")
    with pytest.raises(ConfigError):
        load_family(p)
    with pytest.raises(ConfigError):
        preset("I", b1="x")
