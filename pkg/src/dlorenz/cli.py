"""Command-line front end: dlorenz {henon,sweep,rescale,powers,scan-delta}.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""
import argparse
import configparser
import csv
import json
import math
import sys

import numpy as np

from . import belyakov, lab
from .family import ConfigError, DomainError, MuVector, check_nondegeneracy, load_family, preset
from .henon import Diverged, HenonParams, NonInvertible, inverse_step
from .returnmap import (CSV_COLUMNS, ReturnMapConfig, balance_j, fit_contraction, ladder_mu,
                        mu2_positive_diagnostic, rescale_and_compare)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class Invalid(ValueError):
    """Bad flags or configuration, reported with exit code 2."""


def _writer(path):
    return open(path, "w", newline="") if path else _Stdout()


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _dump_json(obj, path):
    with _writer(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _protocol(args, base=None):
    p = dict(vars(base or lab.Protocol()))
    for key in ("n", "n_transient", "base_seed"):
        v = getattr(args, key, None)
        if v is not None:
            p[key] = v
    if p["n"] < 1 or p["n_transient"] < 0:
        raise Invalid("need n >= 1 and n_transient >= 0")
    return lab.Protocol(**p)


def _ly_dict(ly):
    if ly is None:
        return None
    return {"exponents": list(ly.exponents), "sum": ly.total, "n": ly.n_iterations,
            "drift": ly.convergence_estimate, "volume_exponents": list(ly.volume_exponents)}


# -- henon ------------------------------------------------------------------

def cmd_henon(args):
    params = HenonParams(args.m1, args.m2, args.b)
    if args.inverse:
        if not params.invertible:
            raise NonInvertible("B = 0: the map has no inverse")
        if args.action != "orbit":
            raise Invalid("--inverse applies to the orbit action only")
    s0 = tuple(args.s0)
    proto = _protocol(args)
    if args.action == "orbit":
        n_keep = args.n_keep
        if args.inverse:
            pts, s = [], s0
            for i in range(proto.n_transient + n_keep):
                s = inverse_step(params, s)
                if not all(math.isfinite(v) and abs(v) < proto.escape for v in s):
                    raise Diverged(f"inverse orbit diverged at iteration {i}", i)
                if i >= proto.n_transient:
                    pts.append(s)
            pts = np.array(pts).reshape(-1, 3)
        else:
            orb = lab.iterate_orbit(params, s0, proto.n_transient, n_keep, proto.escape)
            if orb.diverged:
                raise Diverged(f"orbit diverged at iteration {orb.diverged_at}", orb.diverged_at)
            pts = orb.points
        with _writer(args.out) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "x", "y", "z"])
            for i, p in enumerate(pts):
                w.writerow([i] + [repr(float(v)) for v in p])
        return EXIT_OK
    if args.action == "lyapunov":
        orb = lab.iterate_orbit(params, s0, proto.n_transient, 1, proto.escape)
        if orb.diverged:
            raise Diverged(f"orbit diverged at iteration {orb.diverged_at}", orb.diverged_at)
        ly = lab.lyapunov_spectrum(params, orb.points[-1], proto.n, proto.escape)
        out = _ly_dict(ly)
        out["ln|B|"] = math.log(abs(params.B)) if params.B else None
        _dump_json(out, args.out)
        return EXIT_OK
    cell = lab.classify(params, proto)
    _dump_json({"M1": params.M1, "M2": params.M2, "B": params.B, "label": cell.label,
                "flags": cell.flags, "period": cell.period, "lyapunov": _ly_dict(cell.lyapunov)}, args.out)
    return EXIT_OK


# -- sweep ------------------------------------------------------------------

_RUN_KEYS = {"out", "summary", "threads", "case", "family_config", "k", "j"}
_PROTO_KEYS = {"n", "n_transient", "escape", "fixed_tol", "period_tol", "max_period", "lambda_zero",
               "quasi_volume", "strong_contraction", "n_tail", "jitter", "base_seed", "seeds"}
_INT_PROTO = {"n", "n_transient", "max_period", "n_tail", "base_seed"}


def _parse_seeds(text):
    seeds = []
    for chunk in text.split(";"):
        vals = [float(v) for v in chunk.replace(",", " ").split()]
        if len(vals) != 3:
            raise Invalid(f"seed {chunk.strip()!r} needs three coordinates")
        seeds.append(tuple(vals))
    return tuple(seeds)


def _parse_axis(name, text):
    parts = text.split()
    if len(parts) == 1:
        return None, parts[0]
    if len(parts) != 3:
        raise Invalid(f"{name}: expected 'lo hi count' or a single value, got {text!r}")
    try:
        count = int(parts[2])
    except ValueError:
        raise Invalid(f"{name}: count must be an integer") from None
    if count < 0:
        raise Invalid(f"{name}: count must be non-negative")
    return lab.Axis(name, parts[0], parts[1], count), None


def _read_ini(path):
    cp = configparser.ConfigParser()
    cp.optionxform = str  # axis names are case-sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise Invalid(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise Invalid(f"{path}: {exc}") from exc
    return cp


def load_sweep_config(path):
    """Parse a sweep INI file into (axes, fixed, protocol values, run values).

    [grid]: one line per parameter, 'lo hi count' for an axis (declaration
    order fixes the cell order) or a single value for a fixed parameter.
    [protocol]: classification settings. [run]: out, summary, threads and,
    for mu-space grids, case / family_config, k, j.
    """
    cp = _read_ini(path)
    unknown = set(cp.sections()) - {"grid", "protocol", "run"}
    if unknown:
        raise Invalid(f"unknown sections: {', '.join(sorted(unknown))}")
    if not cp.has_section("grid"):
        raise Invalid("missing [grid] section")
    axes, fixed = [], {}
    for name, text in cp.items("grid"):
        if name not in lab.HENON_AXES + lab.MU_AXES:
            raise Invalid(f"unknown grid parameter {name!r}")
        ax, val = _parse_axis(name, text)
        if ax:
            axes.append(ax)
        else:
            fixed[name] = val
    proto = {}
    if cp.has_section("protocol"):
        for key, text in cp.items("protocol"):
            if key not in _PROTO_KEYS:
                raise Invalid(f"unknown protocol key {key!r}")
            try:
                proto[key] = _parse_seeds(text) if key == "seeds" else (
                    int(text) if key in _INT_PROTO else float(text))
            except ValueError:
                raise Invalid(f"protocol {key}: bad value {text!r}") from None
    run = dict(cp.items("run")) if cp.has_section("run") else {}
    bad = set(run) - _RUN_KEYS
    if bad:
        raise Invalid(f"unknown run keys: {', '.join(sorted(bad))}")
    return axes, fixed, proto, run


def _family_for(case, family_config):
    if family_config:
        return load_family(family_config)
    if case not in ("I", "IIa", "IIb"):
        raise Invalid(f"unknown case {case!r}")
    return preset(case)


def cmd_sweep(args):
    axes, fixed, proto, run = [], {}, {}, {}
    if args.config:
        axes, fixed, proto, run = load_sweep_config(args.config)
    for spec in args.axis or []:
        name, _, text = spec.partition("=")
        ax, val = _parse_axis(name.strip(), text.replace(",", " ").replace(":", " "))
        axes = [a for a in axes if a.name != ax.name] if ax else axes
        fixed.pop(name.strip(), None)
        if ax:
            axes.append(ax)
        else:
            fixed[name.strip()] = val
    for spec in args.fixed or []:
        name, _, text = spec.partition("=")
        axes = [a for a in axes if a.name != name.strip()]
        fixed[name.strip()] = text.strip()
    if not axes and not fixed:
        raise Invalid("no grid given (use --config or --axis/--fixed)")
    mu_space = any(n in lab.MU_AXES for n in [a.name for a in axes] + list(fixed))
    if not mu_space:
        try:
            fixed = {n: float(v) for n, v in fixed.items()}
        except ValueError as exc:
            raise Invalid(str(exc)) from None
    total = int(np.prod([a.count for a in axes])) if axes else 1
    if total > 10**6:
        raise Invalid(f"{total} cells exceed the 10^6 limit")

    protocol = _protocol(args, lab.Protocol(**proto))
    out = args.out or run.get("out")
    summary = args.summary or run.get("summary")
    threads = args.threads or (int(run["threads"]) if "threads" in run else None) or lab.default_threads()
    kw = {}
    if mu_space:
        case = args.case or run.get("case", "I")
        fam = _family_for(case, args.family_config or run.get("family_config"))
        k = args.k if args.k is not None else run.get("k")
        if k is None:
            raise Invalid("mu-space sweeps need k")
        j = args.j if args.j is not None else run.get("j")
        kw = dict(family=fam, k=int(k), j=None if j in (None, "") else int(j))
    cells = lab.sweep_grid(axes, fixed, protocol, threads=threads, out_csv=out, summary_json=summary, **kw)
    counts = lab.label_counts(cells)
    print(json.dumps({"cells": len(cells), "counts": counts}, sort_keys=True),
          file=sys.stderr if out is None else sys.stdout)
    return EXIT_OK


# -- rescale ----------------------------------------------------------------

def _default_ladder(case):
    return list(range(10, 25, 2)) if case == "I" else list(range(10, 23, 3))


def cmd_rescale(args):
    fam = _family_for(args.case, args.config)
    rep = check_nondegeneracy(fam)
    if not rep.ok:
        raise Invalid(f"family fails non-degeneracy: {', '.join(rep.failed())}")
    ks = args.k or _default_ladder(fam.case)
    if fam.heteroclinic:
        js = args.j or [balance_j(fam, k) for k in ks]
        if len(js) != len(ks):
            raise Invalid("give one j per k")
    else:
        js = [None] * len(ks)

    if args.mu2_positive:
        reports = []
        for k, j in zip(ks, js):
            cfg = ReturnMapConfig(fam, k, j, MuVector(0.0, args.mu2, 0.0))
            reports.append(mu2_positive_diagnostic(cfg))
        C, resid = fit_contraction(reports, fam.local1.block.lam)
        proto = _protocol(args, lab.Protocol(n=args.n or 100_000))
        with _writer(args.out) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "j", "mu2", "x1_sup", "C_k_lambda_k", "M1", "M2", "abs_M2", "label"])
            for r in reports:
                label = lab.classify(r.effective, proto).label
                w.writerow([r.k, "" if r.j is None else r.j, repr(r.mu2), repr(r.x1_sup),
                            repr(C * r.k * abs(fam.local1.block.lam) ** r.k), repr(float(r.M1)),
                            repr(float(r.M2)), repr(abs(float(r.M2))), label])
        print(f"envelope C={C:.6g} spread={resid:.3g}", file=sys.stderr)
        return EXIT_OK

    reports = []
    for k, j in zip(ks, js):
        mu = ladder_mu(fam, k, j, args.branch)
        reports.append(rescale_and_compare(ReturnMapConfig(fam, k, j, mu), samples=args.samples))
    with _writer(args.out) as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS + ["B_measured"], lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(dict(r.row(), B_measured=repr(r.B_measured)))
    return EXIT_OK


# -- powers -----------------------------------------------------------------

def cmd_powers(args):
    lambdas = args.lam or belyakov.DEFAULT_LAMBDAS
    for lam in lambdas:
        if not abs(lam) < 1:
            raise Invalid(f"lambda={lam}: need |lambda| < 1")
        for mu2 in args.mu2 or []:
            if mu2 >= lam * lam:
                raise Invalid(f"mu2={mu2} >= lambda^2={lam * lam:g}: an eigenvalue leaves the unit disc")
    if args.k_max < 0 or args.k_max > belyakov.K_MAX:
        raise Invalid(f"k-max must lie in [0, {belyakov.K_MAX}]")
    bits = None if args.float64 else args.bits
    checks = belyakov.compare_powers(lambdas, args.mu2 or None, args.k_max, bits)
    worst = max((c.deviation for c in checks), default=0.0)
    with _writer(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "mu2", "worst_k", "max_abs_deviation"])
        for c in checks:
            w.writerow([repr(c.lam), repr(c.mu2), c.k, repr(c.deviation)])
    status = "ok" if worst <= args.tol else "FAILED"
    print(f"max deviation {worst:.3e} (tolerance {args.tol:g}, "
          f"{'float64' if bits is None else f'{bits}-bit'}): {status}", file=sys.stderr)
    return EXIT_OK if worst <= args.tol else EXIT_NUMERIC


# -- scan-delta -------------------------------------------------------------

def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def cmd_scan_delta(args):
    fam = _family_for(args.case, args.config)
    k_lo, k_hi = args.k_range
    ks = list(range(k_lo, k_hi + 1, args.k_step))
    targets = dict(M1=_floats(args.m1), M2=_floats(args.m2), B=args.b)
    proto = _protocol(args)
    report = lab.scan_delta_k(fam, ks, args.j, targets, proto, args.branch, args.threads)
    out = report.to_dict()
    out["longest_run"] = report.longest_run()
    _dump_json(out, args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_protocol_flags(p, n_default_note="1e6"):
    p.add_argument("--n", type=int, help=f"iterations for the Lyapunov estimate (default {n_default_note})")
    p.add_argument("--n-transient", dest="n_transient", type=int, help="discarded iterations (default 1e4)")
    p.add_argument("--seed", dest="base_seed", type=int, help="base seed for per-cell jitter")


def build_parser():
    ap = argparse.ArgumentParser(prog="dlorenz", description="3D Henon maps, return maps near homoclinic "
                                 "tangencies and discrete Lorenz-like attractor search.")
    sub = ap.add_subparsers(dest="command", required=True)

    h = sub.add_parser("henon", help="orbit, Lyapunov spectrum or label at one (M1, M2, B)")
    h.add_argument("--m1", type=float, required=True)
    h.add_argument("--m2", type=float, required=True)
    h.add_argument("--b", type=float, required=True)
    h.add_argument("--s0", type=float, nargs=3, default=lab.DEFAULT_SEEDS[0], metavar=("X", "Y", "Z"))
    h.add_argument("--n-keep", dest="n_keep", type=int, default=1000, help="orbit points written")
    h.add_argument("--inverse", action="store_true", help="iterate the inverse map (orbit only)")
    h.add_argument("--out", help="output file (default stdout)")
    _add_protocol_flags(h)
    h.add_argument("action", choices=("orbit", "lyapunov", "classify"))
    h.set_defaults(func=cmd_henon)

    s = sub.add_parser("sweep", help="classify a parameter grid (Henon space or mu space)",
                       description="Precedence: flags > config file > defaults. Thread count defaults to "
                                   f"${lab.THREADS_ENV} or 1.")
    s.add_argument("--config", help="INI file with [grid], [protocol], [run]")
    s.add_argument("--axis", action="append", help="NAME=lo,hi,count (repeatable)")
    s.add_argument("--fixed", action="append", help="NAME=value (repeatable)")
    s.add_argument("--out", help="CSV path; an existing partial file is resumed")
    s.add_argument("--summary", help="JSON summary path")
    s.add_argument("--threads", type=int)
    s.add_argument("--case", choices=("I", "IIa", "IIb"))
    s.add_argument("--family-config", dest="family_config")
    s.add_argument("--k", type=int)
    s.add_argument("--j", type=int)
    _add_protocol_flags(s)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("rescale", help="rescaled return map vs predicted Henon map over a k ladder")
    r.add_argument("--case", choices=("I", "IIa", "IIb"), default="I")
    r.add_argument("--config", help="family INI file (overrides --case)")
    r.add_argument("--k", type=int, nargs="+")
    r.add_argument("--j", type=int, nargs="+", help="one j per k (default: balanced)")
    r.add_argument("--branch", type=int, default=1, help="which zero of the oscillating term")
    r.add_argument("--samples", type=int, default=17, help="lattice points per axis on [-2, 2]")
    r.add_argument("--mu2-positive", dest="mu2_positive", action="store_true",
                   help="run the saddle-side diagnostic instead of the ladder")
    r.add_argument("--mu2", type=float, default=1e-6, help="mu2 for the saddle-side diagnostic")
    r.add_argument("--n", type=int, help="iterations when classifying the effective 2D map")
    r.add_argument("--out")
    r.set_defaults(func=cmd_rescale)

    w = sub.add_parser("powers", help="closed-form block powers against repeated multiplication")
    w.add_argument("--lambda", dest="lam", type=float, action="append")
    w.add_argument("--mu2", type=float, action="append")
    w.add_argument("--k-max", dest="k_max", type=int, default=60)
    w.add_argument("--bits", type=int, default=128, help="mpfr precision for both sides")
    w.add_argument("--float64", action="store_true", help="compare in double precision instead")
    w.add_argument("--tol", type=float, default=1e-9)
    w.add_argument("--out")
    w.set_defaults(func=cmd_powers)

    d = sub.add_parser("scan-delta", help="mu-space domains where the return map looks Lorenz-like")
    d.add_argument("--case", choices=("I", "IIa", "IIb"), default="I")
    d.add_argument("--config")
    d.add_argument("--k-range", dest="k_range", type=int, nargs=2, default=(11, 19), metavar=("LO", "HI"))
    d.add_argument("--k-step", dest="k_step", type=int, default=1)
    d.add_argument("--j", type=int, nargs="+")
    d.add_argument("--m1", default="-0.02,0,0.02")
    d.add_argument("--m2", default="0.83,0.85,0.87")
    d.add_argument("--b", type=float, default=0.7)
    d.add_argument("--branch", type=int, default=1)
    d.add_argument("--threads", type=int)
    d.add_argument("--out")
    _add_protocol_flags(d)
    d.set_defaults(func=cmd_scan_delta)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)  # argparse exits with 2 on bad flags
    try:
        return args.func(args)
    except (Diverged, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (Invalid, ConfigError, NonInvertible, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
