"""Acceptance criteria 1-9.

Each test prints one PASS/FAIL line. Run directly for the table alone:

    python tests/test_acceptance.py
"""
import filecmp
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from dlorenz.belyakov import compare_powers
from dlorenz.family import MuVector, preset
from dlorenz.henon import HenonParams, find_degenerate_point, fixed_points, jacobian
from dlorenz.lab import Axis, Protocol, classify, iterate_orbit, lyapunov_spectrum, scan_delta_k, sweep_grid
from dlorenz.returnmap import (PRODUCT_WINDOW, ReturnMapConfig, balance_j, fit_contraction, jacobian_product,
                               ladder_mu, mu2_positive_diagnostic, rescale_and_compare)

RESULTS = {}


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS[n] = line
    if "pytest" in sys.modules and hasattr(report, "capsys"):
        with report.capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


@pytest.fixture(autouse=True)
def _show(capsys):
    report.capsys = capsys
    yield
    del report.capsys


def _non_increasing(v):
    return all(b <= a for a, b in zip(v, v[1:]))


def _same_multiset(a, b, tol):
    b = list(b)
    for r in a:
        i = min(range(len(b)), key=lambda i: abs(b[i] - r))
        if abs(b[i] - r) > tol:
            return False
        b.pop(i)
    return True


# 1 -------------------------------------------------------------------------

def criterion_1():
    t = time.perf_counter()
    checks = compare_powers(k_max=60, bits=128)
    dt = time.perf_counter() - t
    worst = max(checks, key=lambda c: c.deviation)
    f64 = max(c.deviation for c in compare_powers(k_max=60, bits=None))
    ok = worst.deviation <= 1e-9 and dt < 1.0
    return report(1, ok, f"max |closed - naive| = {worst.deviation:.2e} over lambda x mu2 x k<=60 in 128-bit "
                         f"arithmetic, {dt:.2f} s (float64 roundoff alone gives {f64:.1e})")


# 2 -------------------------------------------------------------------------

def criterion_2():
    cases = [((-1, -1, 1), (-0.25, 1.0, 1.0)),  # fixed-point algebra forces M1 = -1/4
             ((-1, 1j, -1j), (1.75, -1.0, -1.0))]
    errs, round_trip = [], True
    for target, want in cases:
        p = find_degenerate_point(target)
        errs.append(float(np.max(np.abs(np.subtract((p.M1, p.M2, p.B), want)))))
        round_trip &= any(_same_multiset(target, f.multipliers, 1e-8) for f in fixed_points(p))
    ok = max(errs) <= 1e-10 and round_trip
    return report(2, ok, f"(-1/4,1,1) and (7/4,-1,-1) recovered to {max(errs):.1e}; "
                         f"multiplier round trip {'ok' if round_trip else 'failed'}")


# 3 -------------------------------------------------------------------------

BOUNDED = [HenonParams(m1, m2, b) for m1 in (-0.02, 0.0, 0.02, 0.04)
           for m2, b in ((0.8, 0.7), (0.85, 0.6), (0.9, 0.5), (0.85, 0.8), (0.5, -0.4))]
FIXED = [HenonParams(0.0, 0.0, 0.1), HenonParams(-0.02, 0.73, 0.7), HenonParams(0.02, 0.7, 0.7),
         HenonParams(0.1, 0.2, -0.3)]


def criterion_3():
    t = time.perf_counter()
    sum_err = gap = fp_err = 0.0
    bounded = 0
    for p in BOUNDED:
        orb = iterate_orbit(p, (0.1, 0.1, 0.1), 10_000, 1)
        if orb.diverged:
            continue
        bounded += 1
        ly = lyapunov_spectrum(p, orb.points[-1], 1_000_000)
        sum_err = max(sum_err, abs(ly.total - math.log(abs(p.B))))
        gap = max(gap, ly.estimator_gap)
    for p in FIXED:
        fp = next(f for f in fixed_points(p) if max(abs(r) for r in f.multipliers) < 1)
        orb = iterate_orbit(p, (0.1, 0.1, 0.1), 10_000, 1)
        ly = lyapunov_spectrum(p, orb.points[-1], 1_000_000)
        want = sorted(np.log(np.abs(np.linalg.eigvals(jacobian(p, fp.point)))), reverse=True)
        fp_err = max(fp_err, float(np.max(np.abs(np.subtract(ly.exponents, want)))))
    dt = time.perf_counter() - t
    ok = bounded == 20 and sum_err <= 1e-3 and fp_err <= 1e-3 and gap <= 1e-2 and dt < 120
    return report(3, ok, f"{bounded}/20 bounded orbits, max |sum - ln|B|| = {sum_err:.1e}, "
                         f"fixed-point spectra within {fp_err:.1e}, estimator gap {gap:.1e}, {dt:.1f} s")


# 4 -------------------------------------------------------------------------

def criterion_4():
    cell = classify(HenonParams(0.0, 0.85, 0.7), Protocol())
    e = cell.lyapunov.exponents
    s = cell.lyapunov.total
    ok = (e[0] > 0.01 and e[0] + e[1] >= -0.01 and abs(s - math.log(0.7)) <= 1e-3
          and cell.label == "lorenz-candidate" and cell.lyapunov.estimator_gap <= 1e-2)
    return report(4, ok, f"label {cell.label}, L = ({e[0]:.4f}, {e[1]:.1e}, {e[2]:.4f}), "
                         f"|sum - ln 0.7| = {abs(s - math.log(0.7)):.1e}")


# 5 -------------------------------------------------------------------------

def criterion_5():
    fam = preset("I")
    t = time.perf_counter()
    reps = []
    for k in range(10, 25, 2):
        reps.append(rescale_and_compare(ReturnMapConfig(fam, k, None, ladder_mu(fam, k)), 2.0, 17))
    dt = time.perf_counter() - t
    c0 = [r.dev_C0 for r in reps]
    c1 = [r.dev_C1 for r in reps]
    neg = all(float(r.mu.mu2) < 0 for r in reps)
    ok = neg and _non_increasing(c0) and c0[-1] <= 0.05 and max(c1) <= 0.1 and dt < 30
    return report(5, ok, f"k=10..24: C0 {c0[0]:.1e} -> {c0[-1]:.1e} "
                         f"({'monotone' if _non_increasing(c0) else 'NOT monotone'}), max C1 {max(c1):.1e}, "
                         f"mu2<0 {neg}, {dt:.1f} s")


# 6 -------------------------------------------------------------------------

def criterion_6():
    parts, ok = [], True
    for case in ("IIa", "IIb"):
        fam = preset(case)
        reps, in_window = [], True
        for k in range(10, 23, 3):
            j = balance_j(fam, k)
            in_window &= PRODUCT_WINDOW[0] <= jacobian_product(fam, k, j) <= PRODUCT_WINDOW[1]
            reps.append(rescale_and_compare(ReturnMapConfig(fam, k, j, ladder_mu(fam, k, j)), 2.0, 17))
        c0 = [r.dev_C0 for r in reps]
        last = reps[-1]
        b_err = abs(float(last.predicted.B) / last.B_measured - 1)
        ok &= in_window and _non_increasing(c0) and b_err <= 0.1
        parts.append(f"{case} C0 {c0[0]:.1e} -> {c0[-1]:.1e} "
                     f"({'monotone' if _non_increasing(c0) else 'NOT monotone'}), B off by {b_err:.1e}")
    return report(6, ok, "; ".join(parts))


# 7 -------------------------------------------------------------------------

def criterion_7():
    fam = preset("I")
    lam = fam.local1.block.lam
    reps = [mu2_positive_diagnostic(ReturnMapConfig(fam, k, None, MuVector(0.0, 1e-6, 0.0)))
            for k in range(10, 21)]
    C, spread = fit_contraction(reps, lam)
    bounded = all(r.x1_sup <= C * r.k * abs(lam) ** r.k * (1 + 1e-12) for r in reps)
    m2 = [abs(float(r.M2)) for r in reps]
    growing = all(b > a for a, b in zip(m2, m2[1:]))
    proto = Protocol(n=100_000)
    labels = [classify(r.effective, proto).label for r, a in zip(reps, m2) if a > 1]
    no_attractor = all(lb == "diverged" for lb in labels)
    ok = bounded and spread <= 0.2 and growing and no_attractor
    return report(7, ok, f"x1_sup <= {C:.3f} k lambda^k (spread {spread:.1e}); |M2| {m2[0]:.3g} -> {m2[-1]:.3g} "
                         f"{'strictly increasing' if growing else 'NOT increasing'}; "
                         f"{labels.count('diverged')}/{len(labels)} effective maps without attractor")


# 8 -------------------------------------------------------------------------

def criterion_8():
    rep = scan_delta_k(preset("I"), list(range(10, 20)), protocol=Protocol())
    scanned = [b for b in rep.boxes if not b.skipped]
    hit = [b for b in scanned if b.hits > 0]
    norms = [b.center_norm for b in hit]
    decreasing = all(b < a for a, b in zip(norms, norms[1:]))
    negative = all(b.center[1] < 0 for b in hit)
    run = rep.longest_run()
    ok = run >= 3 and decreasing and negative
    return report(8, ok, f"candidate boxes at k = {[b.k for b in hit]} (run of {run} admissible k; even k "
                         f"infeasible for B = 0.7), center norms {norms[0]:.3f} -> {norms[-1]:.3f}"
                         f"{'' if decreasing else ' NOT decreasing'}, mu2 centers negative {negative}")


# 9 -------------------------------------------------------------------------

def criterion_9():
    axes = [Axis("M1", -0.3, 0.1, 11), Axis("M2", 0.7, 1.0, 11)]
    with tempfile.TemporaryDirectory() as d:
        a, b = Path(d) / "t1.csv", Path(d) / "t4.csv"
        t = time.perf_counter()
        cells = sweep_grid(axes, {"B": 0.7}, Protocol(), threads=4, out_csv=a)
        dt = time.perf_counter() - t
        sweep_grid(axes, {"B": 0.7}, Protocol(), threads=1, out_csv=b)
        same = filecmp.cmp(a, b, shallow=False)
    n_lc = sum(c.label == "lorenz-candidate" for c in cells)
    ok = same and n_lc >= 1
    return report(9, ok, f"11x11 sweep CSV byte-identical for 1 and 4 threads: {same}; "
                         f"{n_lc} lorenz-candidate cells; 4 threads took {dt:.1f} s")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_criterion(crit):
    assert crit()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    sys.exit(0 if all(results) else 1)
