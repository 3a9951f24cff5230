"""Orbits, Lyapunov spectra, attractor labels and parameter sweeps.

Models are anything exposing ``coefficients()`` in the kernel layout
(HenonParams, QuadraticMap).
"""
import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import gmpy2
import numpy as np

from . import kernels
from .henon import ESCAPE, Diverged, HenonParams, State3, quadratic_fixed_points

LABELS = ("diverged", "fixed-point", "periodic", "invariant-curve", "chaotic", "lorenz-candidate")
DEFAULT_SEEDS = ((0.1, 0.1, 0.1), (0.12, 0.09, 0.11))
THREADS_ENV = "DLORENZ_THREADS"


@dataclass(frozen=True)
class Protocol:
    n_transient: int = 10_000
    n: int = 1_000_000
    seeds: tuple = DEFAULT_SEEDS
    escape: float = ESCAPE
    fixed_tol: float = 1e-8
    period_tol: float = 1e-8
    max_period: int = 64
    lambda_zero: float = 0.005
    quasi_volume: float = -0.01
    strong_contraction: float = -0.01
    n_tail: int = 256
    jitter: float = 0.0
    base_seed: int = 0


@dataclass
class Orbit:
    points: np.ndarray
    diverged_at: int = -1

    @property
    def diverged(self):
        return self.diverged_at >= 0


@dataclass
class LyapunovResult:
    exponents: tuple
    n_iterations: int
    convergence_estimate: float
    volume_exponents: tuple = ()
    bbox: tuple = ()

    @property
    def estimator_gap(self):
        return float(np.max(np.abs(np.subtract(self.exponents, self.volume_exponents))))

    @property
    def total(self):
        return float(sum(self.exponents))


@dataclass
class ClassificationCell:
    params: object
    label: str
    lyapunov: Optional[LyapunovResult]
    seed: State3
    flags: list = field(default_factory=list)
    period: Optional[int] = None
    index: int = 0


def _coef(model):
    return np.asarray(model.coefficients(), dtype=float)


def iterate_orbit(model, s0, n_transient, n_keep, escape=ESCAPE) -> Orbit:
    if n_transient < 0 or n_keep < 0:
        raise ValueError("iteration counts must be non-negative")
    out, div = kernels.orbit(_coef(model), np.asarray(s0, dtype=float), int(n_transient), int(n_keep), escape)
    if div >= 0:
        kept = max(0, div - n_transient)
        return Orbit(out[:kept], int(div))
    return Orbit(out, -1)


def lyapunov_spectrum(model, s0, n, escape=ESCAPE) -> LyapunovResult:
    """Lyapunov exponents along the orbit of s0 (n steps).

    Primary estimate: Gram-Schmidt re-orthonormalisation of a tangent frame
    every step. Second estimate, used as a cross-check: growth of a single
    vector, of a bivector (through the cofactor matrix) and of the
    Jacobian determinant.
    """
    if n < 1:
        raise ValueError("n must be positive")
    r = kernels.lyapunov(_coef(model), np.asarray(s0, dtype=float), int(n), escape)
    if r["diverged_at"] >= 0:
        raise Diverged(f"orbit diverged at iteration {r['diverged_at']}", r["diverged_at"])
    qr = r["qr"] / n
    v1, v2, v3 = r["vol"] / n
    vol = np.array([v1, v2 - v1, v3 - v2])
    drift = 0.0
    if r["n_mid"] > 0:
        drift = float(np.max(np.abs(qr - r["qr_mid"] / r["n_mid"])))
    order = np.argsort(-qr, kind="stable")
    return LyapunovResult(
        tuple(float(v) for v in qr[order]),
        int(n),
        drift,
        tuple(float(v) for v in np.sort(vol)[::-1]),
        tuple(float(v) for v in r["bbox"]),
    )


def _period(tail, max_p, tol):
    n = len(tail)
    for p in range(1, min(max_p, n - 1) + 1):
        if np.max(np.abs(tail[p:] - tail[:-p])) < tol:
            return p
    return None


def _saddle_in_box(model, bbox):
    """A fixed point inside the box with exactly one unstable multiplier."""
    lo, hi = np.asarray(bbox[:3]), np.asarray(bbox[3:])
    for p, mults in quadratic_fixed_points(model):
        unstable = int(np.sum(np.abs(mults) > 1.0))
        if unstable == 1 and np.all(p >= lo) and np.all(p <= hi):
            return True
    return False


def _classify_seed(model, seed, protocol: Protocol):
    flags = []
    orb = iterate_orbit(model, seed, protocol.n_transient, protocol.n_tail, protocol.escape)
    if orb.diverged:
        return "diverged", None, flags, None
    tail = orb.points
    try:
        ly = lyapunov_spectrum(model, tail[-1], protocol.n, protocol.escape)
    except Diverged as exc:
        flags.append(f"diverged-at={exc.index}")
        return "diverged", None, flags, None
    e = ly.exponents
    if ly.total > 1e-9:
        # volume is expanded on average, so nothing here can attract
        flags.append("volume-expanding")
        return "diverged", ly, flags, None
    diam = float(np.max(tail.max(axis=0) - tail.min(axis=0)))
    if diam < protocol.fixed_tol:
        return "fixed-point", ly, flags, None
    p = _period(tail, protocol.max_period, protocol.period_tol)
    if p is not None:
        return "periodic", ly, flags, p
    if e[0] > protocol.lambda_zero:
        if (e[0] + e[1] >= protocol.quasi_volume and e[2] < protocol.strong_contraction
                and _saddle_in_box(model, ly.bbox)):
            return "lorenz-candidate", ly, flags, None
        return "chaotic", ly, flags, None
    if abs(e[0]) <= protocol.lambda_zero:
        return "invariant-curve", ly, flags, None
    flags.append("ambiguous")
    return "chaotic", ly, flags, None


def _seeds(protocol: Protocol, index):
    seeds = [tuple(float(v) for v in s) for s in protocol.seeds]
    if protocol.jitter > 0:
        rng = np.random.default_rng(protocol.base_seed + index)
        seeds = [tuple(np.asarray(s) + protocol.jitter * rng.standard_normal(3)) for s in seeds]
    return seeds


def classify(model, protocol: Protocol = Protocol(), index=0) -> ClassificationCell:
    """Label the attractor reached from the protocol seeds.

    The label comes from the first seed; disagreement between seeds is
    flagged rather than resolved.
    """
    seeds = _seeds(protocol, index)
    results = [_classify_seed(model, s, protocol) for s in seeds]
    label, ly, flags, period = results[0]
    for other in results[1:]:
        if other[0] != label:
            flags = flags + ["seed-dependent"]
            break
    if period is not None:
        flags = flags + [f"p={period}"]
    return ClassificationCell(model, label, ly, State3(*seeds[0]), flags, period, index)


# -- sweeps -----------------------------------------------------------------

HENON_AXES = ("M1", "M2", "B")
MU_BITS = 256
MU_AXES = ("mu1", "mu2", "mu3")


@dataclass(frozen=True)
class Axis:
    name: str
    lo: object
    hi: object
    count: int

    def values(self):
        if self.count <= 0:
            return []
        if self.name in MU_AXES:
            lo, hi = _mp(self.lo), _mp(self.hi)
            if self.count == 1:
                return [lo]
            with gmpy2.context(gmpy2.get_context(), precision=MU_BITS):
                return [lo + (hi - lo) * i / (self.count - 1) for i in range(self.count)]
        return list(np.linspace(float(self.lo), float(self.hi), self.count))


def _mp(v):
    # mu values matter far below double resolution for large k, so they are
    # read from their decimal text
    with gmpy2.context(gmpy2.get_context(), precision=MU_BITS):
        return v if isinstance(v, gmpy2.mpfr) and v.precision >= MU_BITS else gmpy2.mpfr(str(v))


def grid_points(axes, fixed):
    """Row-major cells (first axis slowest) as dicts of parameter values."""
    values = [a.values() for a in axes]
    if any(len(v) == 0 for v in values):
        return []
    pts = []
    idx = [0] * len(axes)
    total = int(np.prod([len(v) for v in values])) if axes else 1
    for _ in range(total):
        p = dict(fixed)
        for a, v, i in zip(axes, values, idx):
            p[a.name] = v[i]
        pts.append(p)
        for d in range(len(axes) - 1, -1, -1):
            idx[d] += 1
            if idx[d] < len(values[d]):
                break
            idx[d] = 0
    return pts


def _fmt(v):
    if isinstance(v, gmpy2.mpfr):
        return format(v, ".40g")
    return repr(float(v))


def _columns(mu_space):
    head = ["mu1", "mu2", "mu3", "k", "j"] if mu_space else list(HENON_AXES)
    return head + ["label", "L1", "L2", "L3", "sumL", "n", "flags"]


def _row_key(point, mu_space, context):
    if mu_space:
        return [_fmt(point["mu1"]), _fmt(point["mu2"]), _fmt(point["mu3"]), str(context["k"]),
                "" if context.get("j") is None else str(context["j"])]
    return [_fmt(point[n]) for n in HENON_AXES]


def _row(cell, point, mu_space, context):
    vals = _row_key(point, mu_space, context)
    ly = cell.lyapunov
    if ly is None:
        ex = ["", "", "", "", ""]
    else:
        ex = [repr(v) for v in ly.exponents] + [repr(ly.total), str(ly.n_iterations)]
    return vals + [cell.label] + ex + [";".join(cell.flags)]


def _cell_from_row(row, columns, index):
    d = dict(zip(columns, row))
    ly = None
    if d["L1"]:
        ex = (float(d["L1"]), float(d["L2"]), float(d["L3"]))
        ly = LyapunovResult(ex, int(d["n"]), float("nan"))
    flags = d["flags"].split(";") if d["flags"] else []
    return ClassificationCell(None, d["label"], ly, State3(float("nan"), float("nan"), float("nan")), flags, None, index)


def _read_done(path, columns):
    """Complete rows already on disk; a torn last line is discarded."""
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if not lines or lines[0] != ",".join(columns):
        raise ValueError(f"{path}: header does not match this sweep")
    body = lines[1:]
    complete = body[:-1]  # last piece has no trailing newline (empty if the file ended cleanly)
    rows = []
    for line in complete:
        parsed = next(csv.reader([line]))
        if len(parsed) != len(columns):
            break
        rows.append(parsed)
    return rows


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _model_for(point, context):
    if "family" not in context:
        return HenonParams(float(point["M1"]), float(point["M2"]), float(point["B"]))
    from .family import MuVector
    from .returnmap import RescaledReturnMap, ReturnMapConfig, compose_return_map

    cfg = ReturnMapConfig(context["family"], context["k"], context.get("j"),
                          MuVector(point["mu1"], point["mu2"], point["mu3"]))
    return RescaledReturnMap(compose_return_map(cfg)).quadratic_map()


def _run_cell(args):
    index, point, protocol, context = args
    try:
        model = _model_for(point, context)
        cell = classify(model, protocol, index)
    except Exception as exc:  # recorded in the cell, the sweep goes on
        msg = f"error:{type(exc).__name__}:{exc}".replace(",", " ").replace("\n", " ")
        cell = ClassificationCell(None, "error", None, State3(*protocol.seeds[0]), [msg], None, index)
    return cell


def sweep_grid(axes, fixed, protocol: Protocol = Protocol(), threads=None, out_csv=None,
               summary_json=None, family=None, k=None, j=None):
    """Classify every grid cell.

    Henon-space axes are M1, M2, B; mu-space axes are mu1, mu2, mu3 and need
    a family and k (and j for heteroclinic families). Rows are written in
    cell order as they become available, so an interrupted sweep resumes
    from its CSV and produces the same file as an uninterrupted one.
    """
    names = [a.name for a in axes] + list(fixed)
    mu_space = any(n in MU_AXES for n in names)
    allowed = MU_AXES if mu_space else HENON_AXES
    if set(names) - set(allowed) or len(set(names)) != len(names) or set(names) != set(allowed):
        raise ValueError(f"axes and fixed values must cover exactly {', '.join(allowed)}")
    context = {}
    if mu_space:
        if family is None or k is None:
            raise ValueError("mu-space sweeps need a family and k")
        context = {"family": family, "k": int(k), "j": j}
        fixed = {n: _mp(v) for n, v in fixed.items()}
    points = grid_points(axes, fixed)
    columns = _columns(mu_space)
    threads = threads or default_threads()

    done_rows = _read_done(out_csv, columns) if out_csv else []
    n_key = 5 if mu_space else 3
    for i, r in enumerate(done_rows):
        if i >= len(points) or r[:n_key] != _row_key(points[i], mu_space, context):
            done_rows = done_rows[:i]
            break
    cells = [_cell_from_row(r, columns, i) for i, r in enumerate(done_rows[:len(points)])]
    start = len(cells)

    fh = writer = None
    if out_csv:
        fh = open(out_csv, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in done_rows[:start]:
            writer.writerow(r)
        fh.flush()
    try:
        todo = [(i, points[i], protocol, context) for i in range(start, len(points))]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for cell in pool.map(_run_cell, todo):
                cell.params = _params_of(points[cell.index], mu_space)
                cells.append(cell)
                if writer:
                    writer.writerow(_row(cell, points[cell.index], mu_space, context))
                    fh.flush()
    finally:
        if fh:
            fh.close()
    for i, c in enumerate(cells[:start]):
        c.params = _params_of(points[i], mu_space)

    if summary_json:
        write_summary(summary_json, axes, fixed, protocol, cells, context)
    return cells


def _params_of(point, mu_space):
    if mu_space:
        return point
    return HenonParams(float(point["M1"]), float(point["M2"]), float(point["B"]))


def label_counts(cells):
    counts = {}
    for c in cells:
        counts[c.label] = counts.get(c.label, 0) + 1
    return dict(sorted(counts.items()))


def write_summary(path, axes, fixed, protocol, cells, context=None):
    context = context or {}
    meta = {
        "axes": [{"name": a.name, "lo": str(a.lo), "hi": str(a.hi), "count": a.count} for a in axes],
        "fixed": {n: _fmt(v) for n, v in fixed.items()},
        "cells": len(cells),
        "counts": label_counts(cells),
        "protocol": {k_: (list(v) if isinstance(v, tuple) else v) for k_, v in asdict(protocol).items()},
    }
    if "k" in context:
        meta["k"] = context["k"]
        meta["j"] = context.get("j")
        meta["case"] = context["family"].case
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- delta_k domains ----------------------------------------------------------

DEFAULT_TARGETS = dict(M1=(-0.02, 0.0, 0.02), M2=(0.83, 0.85, 0.87), B=0.7)


@dataclass
class DeltaEntry:
    k: int
    j: Optional[int]
    target: HenonParams
    mu: object = None
    label: Optional[str] = None
    flags: list = field(default_factory=list)


@dataclass
class DeltaBox:
    k: int
    j: Optional[int]
    hits: int
    tried: int
    lo: tuple = ()
    hi: tuple = ()
    skipped: Optional[str] = None

    @property
    def center(self):
        return tuple((a + b) / 2 for a, b in zip(self.lo, self.hi))

    @property
    def center_norm(self):
        return math.sqrt(sum(c * c for c in self.center))


@dataclass
class DeltaReport:
    boxes: list
    entries: list

    def nonempty_ks(self):
        return [b.k for b in self.boxes if b.hits > 0]

    def longest_run(self):
        """Longest run of consecutive scanned (not skipped) k with hits."""
        best = cur = 0
        for b in self.boxes:
            if b.skipped:
                continue
            cur = cur + 1 if b.hits > 0 else 0
            best = max(best, cur)
        return best

    def to_dict(self):
        return {
            "boxes": [
                {"k": b.k, "j": b.j, "hits": b.hits, "tried": b.tried, "skipped": b.skipped,
                 "lo": list(b.lo), "hi": list(b.hi),
                 "center": list(b.center) if b.hits else [],
                 "center_norm": b.center_norm if b.hits else None}
                for b in self.boxes
            ],
            "entries": [
                {"k": e.k, "j": e.j, "target": [e.target.M1, e.target.M2, e.target.B],
                 "mu": None if e.mu is None else [_fmt(e.mu.mu1), _fmt(e.mu.mu2), _fmt(e.mu.mu3)],
                 "label": e.label, "flags": e.flags}
                for e in self.entries
            ],
        }


def scan_delta_k(family, k_values, j_values=None, targets=None, protocol: Protocol = Protocol(),
                 branch_index=1, threads=None):
    """Map a lattice of Henon targets to mu for each (k, j) and classify the
    rescaled return map there; report the mu-box of lorenz-candidate hits.

    j_values: None balances j to each k for heteroclinic families.
    """
    from .returnmap import (RescaledReturnMap, ReturnMapConfig, balance_j, compose_return_map,
                            solve_mu_for_target)

    targets = targets or DEFAULT_TARGETS
    lattice = [HenonParams(m1, m2, targets["B"]) for m1 in targets["M1"] for m2 in targets["M2"]]
    threads = threads or default_threads()
    boxes, entries = [], []
    for idx, k in enumerate(k_values):
        j = None
        if family.heteroclinic:
            try:
                j = j_values[idx] if j_values is not None else balance_j(family, k)
            except Exception as exc:
                boxes.append(DeltaBox(k, None, 0, 0, skipped=str(exc)))
                continue

        def work(t, k=k, j=j):
            e = DeltaEntry(k, j, t)
            try:
                e.mu = solve_mu_for_target(family, k, j, t, branch_index)
            except Exception as exc:
                e.flags.append(f"infeasible:{exc}")
                return e
            try:
                cfg = ReturnMapConfig(family, k, j, e.mu)
                q = RescaledReturnMap(compose_return_map(cfg)).quadratic_map()
                cell = classify(q, protocol)
                e.label, e.flags = cell.label, cell.flags
            except Exception as exc:
                e.flags.append(f"error:{exc}")
            return e

        with ThreadPoolExecutor(max_workers=threads) as pool:
            batch = list(pool.map(work, lattice))
        entries.extend(batch)
        if all(e.mu is None for e in batch):
            boxes.append(DeltaBox(k, j, 0, len(batch), skipped=batch[0].flags[0] if batch[0].flags else "infeasible"))
            continue
        hits = [e for e in batch if e.label == "lorenz-candidate"]
        box = DeltaBox(k, j, len(hits), len(batch))
        if hits:
            m = np.array([[float(e.mu.mu1), float(e.mu.mu2), float(e.mu.mu3)] for e in hits])
            box.lo = tuple(float(v) for v in m.min(axis=0))
            box.hi = tuple(float(v) for v in m.max(axis=0))
        boxes.append(box)
    return DeltaReport(boxes, entries)
