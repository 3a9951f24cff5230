"""Compiled vs pure-Python orbit kernels.

    python benchmarks/bench_kernels.py [--n 200000]
"""
import argparse
import time

import numpy as np

from dlorenz import _pykernels
from dlorenz.henon import HenonParams

try:
    from dlorenz import _kernels
except ImportError:
    _kernels = None


def timed(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    args = ap.parse_args()
    coef = HenonParams(0.0, 0.85, 0.7).coefficients()
    s0 = np.array([0.1, 0.1, 0.1])
    backends = [("python", _pykernels)] + ([("cython", _kernels)] if _kernels else [])
    results = {}
    print(f"{'kernel':<10}{'backend':<9}{'steps':>10}{'seconds':>11}{'ns/step':>10}")
    for name, mod in backends:
        t_orb, (pts, _) = timed(mod.orbit, coef, s0, 1000, args.n, 1e6)
        t_ly, ly = timed(mod.lyapunov, coef, s0, args.n, 1e6)
        results[name] = (pts, ly)
        for kern, t in (("orbit", t_orb), ("lyapunov", t_ly)):
            print(f"{kern:<10}{name:<9}{args.n:>10}{t:>11.4f}{1e9 * t / args.n:>10.1f}")
    if len(results) == 2:
        (p0, l0), (p1, l1) = results["python"], results["cython"]
        same = np.array_equal(p0, p1) and np.array_equal(l0["qr"], l1["qr"])
        print(f"outputs bit-identical: {same}")


if __name__ == "__main__":
    main()
