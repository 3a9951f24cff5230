"""Three-dimensional Henon maps as rescaled first-return maps near homoclinic
and heteroclinic tangencies, with tools for locating discrete Lorenz-like
attractors."""
from .belyakov import BelyakovBlock, a1_pow, a1_pow_compact, ck, compare_powers, naive_pow, phase, sk
from .family import MuVector, ModelFamily, check_nondegeneracy, load_family, preset, realize
from .henon import (Diverged, HenonParams, NonInvertible, QuadraticMap, State3, find_degenerate_point,
                    fixed_points, inverse_step, jacobian, step)
from .kernels import BACKEND
from .lab import Axis, Protocol, classify, iterate_orbit, lyapunov_spectrum, scan_delta_k, sweep_grid
from .returnmap import (ReturnMapConfig, RescaledReturnMap, compose_return_map, find_mu2_zero,
                        mu2_positive_diagnostic, predicted_rescaled_params, rescale_and_compare,
                        solve_mu_for_target)

__version__ = "0.1.0"

__all__ = [
    "BelyakovBlock",
    "a1_pow",
    "a1_pow_compact",
    "ck",
    "compare_powers",
    "naive_pow",
    "phase",
    "sk",
    "MuVector",
    "ModelFamily",
    "check_nondegeneracy",
    "load_family",
    "preset",
    "realize",
    "Diverged",
    "HenonParams",
    "NonInvertible",
    "QuadraticMap",
    "State3",
    "find_degenerate_point",
    "fixed_points",
    "inverse_step",
    "jacobian",
    "step",
    "BACKEND",
    "Axis",
    "Protocol",
    "classify",
    "iterate_orbit",
    "lyapunov_spectrum",
    "scan_delta_k",
    "sweep_grid",
    "ReturnMapConfig",
    "RescaledReturnMap",
    "compose_return_map",
    "find_mu2_zero",
    "mu2_positive_diagnostic",
    "predicted_rescaled_params",
    "rescale_and_compare",
    "solve_mu_for_target",
]
