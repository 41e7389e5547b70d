"""Command-line front end: ``gfcalc <module> <verb> [flags]``.

Every verb is a handler ``(args, ctx) -> StepResult`` so that the same code
serves single commands and multi-step scenarios (``gfcalc run <scenario>``).
Reports are deterministic given the inputs and ``--seed``; wall-clock timings
go to a separate file.  Exit codes: 0 pass, 2 invariant violation, 3 input
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from . import genfun, homalg, qbundle, quadform, simplicial, symplin
from .errors import (FileNotFound, GfcalcError, InputError, InvariantViolation, SchemaError,
                     StepFailure)

FORMATS = ("json", "csv", "markdown")
EXIT_PASS, EXIT_INVARIANT, EXIT_INPUT = 0, 2, 3


# ---------------------------------------------------------------------------
# randomness


class SplitMix64:
    """The splitmix64 generator; all randomized suites draw from it.

    Test vectors (seed 0): ``0xe220a8397b1dcdaf``, ``0x6e789e6aa1b965f4``,
    ``0x06c45d188009454f``.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int = 0):
        self.state = int(seed) & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform in ``[0, 1)`` with 53 bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integer(self, lo: int, hi: int) -> int:
        """Uniform in ``[lo, hi]``."""
        return lo + self.next_u64() % (hi - lo + 1)

    def numpy_seed(self) -> int:
        return self.next_u64() >> 32


# ---------------------------------------------------------------------------
# reports


@dataclass
class StepResult:
    ok: bool
    result: Any
    tag: str | None = None
    message: str = ""
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)


@dataclass
class Context:
    seed: int = 0
    tol: float | None = None
    base_dir: str = "."

    def rng(self, salt: int = 0) -> SplitMix64:
        return SplitMix64(self.seed * 1_000_003 + salt)


@dataclass
class Report:
    command: str
    seed: int
    steps: list[dict] = field(default_factory=list)
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    exit_code: int = EXIT_PASS

    @property
    def status(self) -> str:
        return "pass" if self.exit_code == EXIT_PASS else "fail"

    def to_json(self) -> dict:
        return {"command": self.command, "seed": self.seed, "status": self.status,
                "exit_code": self.exit_code, "steps": self.steps}


def _clean(obj):
    """JSON-safe copy with stable float formatting and sorted keys."""
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return str(obj)
        return float(f"{obj:.12g}")
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Fraction):
        return quadform.fraction_str(obj)
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = sorted(obj, key=repr) if isinstance(obj, (set, frozenset)) else obj
        return [_clean(v) for v in seq]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def emit(report: Report, fmt: str = "json", out: str | None = None) -> str:
    """Render the report; with ``out`` also write files (plus ``timings.json``)."""
    if fmt not in FORMATS:
        raise InputError(f"unknown format {fmt!r}")
    if fmt == "json":
        text = dumps(report.to_json())
        files = {"report.json": text}
    elif fmt == "csv":
        files = {f"{name}.csv": _csv(header, rows) for name, (header, rows) in report.tables.items()}
        files["steps.csv"] = _csv(["step", "status", "tag"],
                                  [[s["name"], s["status"], s.get("tag") or ""] for s in report.steps])
        text = "".join(f"# {name}\n{body}" for name, body in sorted(files.items()))
    else:
        text = _markdown(report)
        files = {"report.md": text}
    if out is not None:
        try:
            os.makedirs(out, exist_ok=True)
            for name, body in files.items():
                with open(os.path.join(out, name), "w", encoding="utf-8", newline="") as fh:
                    fh.write(body)
            with open(os.path.join(out, "timings.json"), "w", encoding="utf-8") as fh:
                fh.write(json.dumps({k: round(v, 6) for k, v in report.timings.items()},
                                    sort_keys=True, indent=2) + "\n")
        except OSError as exc:
            raise InputError(f"cannot write to {out}: {exc}", tag="cli:io") from exc
    return text


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([json.dumps(_clean(v)) if isinstance(v, (list, dict)) else _clean(v)
                    for v in r])
    return buf.getvalue()


def _markdown(report: Report) -> str:
    lines = [f"# gfcalc {report.command}", "", f"status: **{report.status}**, seed {report.seed}",
             "", "| step | status | tag |", "|---|---|---|"]
    for s in report.steps:
        lines.append(f"| {s['name']} | {s['status']} | {s.get('tag') or ''} |")
    return "\n".join(lines) + "\n"


def homology_table(H: homalg.GradedAbGroup) -> tuple[list[str], list[list]]:
    return ["degree", "free", "torsion"], [[k, g.free, " ".join(map(str, g.torsion))]
                                          for k, g in H.degrees]


def critical_table(points: Sequence[genfun.CritPoint]) -> tuple[list[str], list[list]]:
    return ["x", "location", "value", "index"], [
        [list(p.base_point), list(p.location), p.value, p.index] for p in points]


# ---------------------------------------------------------------------------
# input helpers


def load_json(path: str, base_dir: str = ".") -> Any:
    full = path if os.path.isabs(path) else os.path.join(base_dir, path)
    try:
        with open(full, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise FileNotFound(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc


def _data(value, ctx: Context):
    """An inline JSON value, or the contents of the file it names."""
    if isinstance(value, str):
        return load_json(value, ctx.base_dir)
    return value


def _require(args: Mapping, key: str):
    if args.get(key) is None:
        raise SchemaError(f"missing argument {key!r}")
    return args[key]


def _base_point(args: Mapping) -> dict[str, float] | None:
    x = args.get("x")
    if x is None:
        return None
    if isinstance(x, str):
        out = {}
        for part in x.split(","):
            k, _, v = part.partition("=")
            out[k.strip()] = float(v)
        return out
    return {str(k): float(v) for k, v in x.items()}


def _monoid(value, ctx: Context) -> simplicial.DiscreteMonoid:
    lib = simplicial.monoid_library()
    if isinstance(value, str) and value in lib:
        return lib[value]
    return simplicial.DiscreteMonoid.from_json(_data(value, ctx))


def _order(value) -> list[str]:
    if isinstance(value, str):
        return [s.strip() for s in value.split(",") if s.strip()]
    return [str(v) for v in value]


def _primes(value) -> tuple[int, ...]:
    if value is None:
        return (2,)
    if isinstance(value, str):
        return tuple(int(p) for p in value.split(","))
    return tuple(int(p) for p in value)


# ---------------------------------------------------------------------------
# handlers: quadform


def h_quadform_invariants(args, ctx) -> StepResult:
    data = _data(_require(args, "file"), ctx)
    forms = data if isinstance(data, list) else [data]
    rows = []
    for d in forms:
        q = quadform.QuadForm.from_json(d)
        inv = quadform.invariants(q)
        rows.append({"dim": inv.dim, "index": inv.index, "coindex": inv.coindex,
                     "signature": inv.signature, "det": quadform.det(q.mat) if q.dim else 1})
    table = (["dim", "index", "coindex", "signature", "det"],
             [[r["dim"], r["index"], r["coindex"], r["signature"], r["det"]] for r in rows])
    return StepResult(True, rows if isinstance(data, list) else rows[0],
                      tables={"invariants": table})


def h_quadform_cutoff_check(args, ctx) -> StepResult:
    """Seeded check of the cut-off laws for one form at ``points`` random points.

    Support inside the declared box, the product law against ``q ⊕ q``, the
    permutation law for the reversal, and ``|grad chi| <= |grad q|`` by
    central differences.
    """
    q = quadform.QuadForm.from_json(_data(_require(args, "file"), ctx))
    points = int(args.get("points", 1000))
    tol = ctx.tol or 1e-12
    rng = ctx.rng(1)
    n = q.dim
    half = quadform.cutoff_support_halfwidths(q)
    sigma = tuple(range(n))[::-1]
    qq, qs = quadform.direct_sum(q, q), quadform.permute(q, sigma)
    worst = {"support": 0.0, "product": 0.0, "permutation": 0.0, "gradient": 0.0}
    step = 1e-6
    for _ in range(points):
        u = np.array([rng.uniform(-1.5 * h, 1.5 * h) for h in half])
        v = np.array([rng.uniform(-1.5 * h, 1.5 * h) for h in half])
        cu = quadform.cutoff_eval(q, u)
        if np.any(np.abs(u) > half):
            worst["support"] = max(worst["support"], abs(cu))
        worst["product"] = max(worst["product"], abs(
            quadform.cutoff_eval(qq, np.concatenate([u, v])) - cu * quadform.cutoff_eval(q, v)))
        worst["permutation"] = max(worst["permutation"], abs(
            quadform.cutoff_eval(qs, u) - quadform.cutoff_eval(q, u[list(sigma)])))
        fd = np.array([(quadform.cutoff_eval(q, u + step * e) - quadform.cutoff_eval(q, u - step * e))
                       / (2 * step) for e in np.eye(n)])
        worst["gradient"] = max(worst["gradient"],
                                float(np.linalg.norm(fd) - np.linalg.norm(q.gradient(u))))
    ok = (worst["support"] <= tol and worst["product"] <= tol and worst["permutation"] <= tol
          and worst["gradient"] <= 1e-4)
    return StepResult(ok, {"points": points, "worst": worst, "halfwidths": list(half)},
                      tag=None if ok else "lemma:cutoff.laws")


# ---------------------------------------------------------------------------
# handlers: symplin


def h_symplin_lift(args, ctx) -> StepResult:
    phi = symplin.StableLift.from_json(_data(_require(args, "phi"), ctx))
    path = symplin.SymplPath.from_json(_data(_require(args, "path"), ctx))
    radius = float(args.get("radius", symplin.DEFAULT_RADIUS))
    lifts = symplin.lift_path(phi, path, radius)
    reduced_ok = True
    for k, lift in enumerate(lifts):
        target = symplin.act_on_E(path.samples[k], symplin.reduce(phi.lagrangian()))
        reduced_ok &= symplin.subspace_equal(symplin.reduce(lift.lagrangian()), target, 1e-8)
    return StepResult(reduced_ok, {"K": path.K, "lifts": [l.to_json() for l in lifts],
                                   "reduction_matches": reduced_ok},
                      tag=None if reduced_ok else "lemma:lifting.reduction")


def h_symplin_reduce(args, ctx) -> StepResult:
    phi = symplin.Lagrangian.from_json(_data(_require(args, "phi"), ctx))
    return StepResult(True, symplin.reduce(phi).to_json())


# ---------------------------------------------------------------------------
# handlers: homalg


def _chain_complex(data: Mapping) -> homalg.ChainComplexZ:
    try:
        return homalg.ChainComplexZ({int(k): v for k, v in data["ranks"].items()},
                                    {int(k): v for k, v in data.get("boundaries", {}).items()})
    except (KeyError, AttributeError, TypeError) as exc:
        raise SchemaError(f"bad chain complex JSON: {exc}") from exc


def h_homalg_homology(args, ctx) -> StepResult:
    C = _chain_complex(_data(_require(args, "file"), ctx))
    H = homalg.homology(C)
    res = {"homology": H.to_json()}
    for p in _primes(args.get("primes")):
        res[f"F{p}"] = {str(k): v for k, v in sorted(homalg.homology_dims_mod_p(C, p).items())}
    return StepResult(True, res, tables={"homology": homology_table(H)})


def h_homalg_snf(args, ctx) -> StepResult:
    data = _data(_require(args, "file"), ctx)
    M = data["matrix"] if isinstance(data, Mapping) else data
    return StepResult(True, {"invariant_factors": homalg.invariant_factors(M)})


def h_homalg_detect(args, ctx) -> StepResult:
    data = _data(_require(args, "file"), ctx)
    A = homalg.GradedAbGroup.from_json(data["A"])
    B = homalg.GradedAbGroup.from_json(data["B"])
    deg = homalg.detect_rank_one(A, B, _primes(data.get("primes", args.get("primes"))))
    return StepResult(True, {"degree": deg})


# ---------------------------------------------------------------------------
# handlers: genfun


def _function(args, ctx) -> genfun.LinFn:
    return genfun.LinFn.from_json(_data(_require(args, "file"), ctx))


def h_genfun_crit(args, ctx) -> StepResult:
    f = _function(args, ctx)
    pts = genfun.critical_points(f, _base_point(args))
    return StepResult(True, {"critical": [p.to_json() for p in pts]},
                      tables={"critical_points": critical_table(pts)})


def h_genfun_double(args, ctx) -> StepResult:
    """Double ``g`` at each ``t``; compare critical points with ``+-r(t)`` and values with ``-+s(t)``."""
    data = _data(_require(args, "file"), ctx)
    ts = args.get("t", data.get("t", [Fraction(1, 64)]))
    if not isinstance(ts, (list, tuple)):
        ts = [ts]
    tol = ctx.tol or 1e-7
    g = ex.parse(data["g"])
    fiber = tuple(data.get("fiber", ["v"]))
    alpha = ex.parse(data.get("alpha", "psi(v)"))
    support = {k: tuple(v) for k, v in data.get("alpha_support", {"v": [-3, 3]}).items()}
    base = data.get("base")
    rows, table = [], []
    ok = True
    for t in ts:
        tf = quadform.as_fraction(t)
        f, check = genfun.double(g, fiber, alpha, tf, support, base, b=data.get("b", 3))
        pts = genfun.critical_points(f, _base_point(args))
        r, s = genfun.double_radius(float(tf)), genfun.double_shift(float(tf))
        ws = sorted(p.location[0] for p in pts)
        vals = sorted(p.value for p in pts)
        expect_w = [-r, r] if data.get("check_radius", True) else ws
        match = len(ws) == len(expect_w) and all(abs(a - b) <= tol for a, b in zip(ws, expect_w))
        if data.get("check_radius", True):
            vmatch = len(vals) == 2 and abs(vals[0] + s) <= tol and abs(vals[1] - s) <= tol
        else:
            vmatch = True
        ok &= match and vmatch
        rows.append({"t": tf, "r": r, "s": s, "check": check.ok,
                     "critical": [p.to_json() for p in pts], "match": match and vmatch})
        table += [[quadform.fraction_str(tf)] + row for row in critical_table(pts)[1]]
    return StepResult(ok, {"doubles": rows}, tag=None if ok else "lemma:doubling.critical",
                      tables={"critical_points": (["t", "x", "location", "value", "index"], table)})


def h_genfun_tube_check(args, ctx) -> StepResult:
    f = _function(args, ctx)
    rep = genfun.tube_check(f, _base_point(args), primes=_primes(args.get("primes") or "2,3"),
                            points=int(args.get("points", 128)), detailed=True)
    expected = args.get("expect")
    ok = rep.consistent and (expected is None or rep.degree == int(expected))
    return StepResult(ok, rep.to_json(), tag=None if ok else "prop:tube-recognition.degree",
                      tables={"homology": homology_table(rep.homology)})


def h_genfun_delta_check(args, ctx) -> StepResult:
    f = _function(args, ctx)
    rep = genfun.difference_homology_check(f, _require(args, "c"), _primes(args.get("primes")),
                                           _base_point(args),
                                           delta_points=int(args.get("delta_points", 32)))
    return StepResult(rep.ok, rep.to_json(),
                      tag=None if rep.ok else "lemma:difference-homology.product")


# ---------------------------------------------------------------------------
# handlers: qbundle


def _cocycle_input(args, ctx):
    """A library scenario name or a cocycle file with optional ``functions``."""
    name = args.get("scenario")
    if name is not None:
        lib = qbundle.scenario_library()
        if name not in lib:
            raise InputError(f"unknown cocycle scenario {name!r}; known: {sorted(lib)}")
        sc = lib[name]
        return sc.cocycle, sc.functions, sc.b
    data = _data(_require(args, "file"), ctx)
    c = qbundle.QCocycle.from_json(data)
    funcs = data.get("functions")
    if funcs is not None:
        funcs = {str(k): genfun.LinFn.from_json(v) for k, v in funcs.items()}
    return c, funcs, data.get("b", 3)


def h_qbundle_verify(args, ctx) -> StepResult:
    c, _, _ = _cocycle_input(args, ctx)
    rep = qbundle.verify(c)
    return StepResult(rep.ok, rep.to_json(), tag=None if rep.ok else "def:q-cocycle.condition")


def h_qbundle_maslov(args, ctx) -> StepResult:
    c, _, _ = _cocycle_input(args, ctx)
    m = qbundle.maslov_class(c)
    expected = args.get("expect")
    ok = expected is None or list(m.pairings) == [int(v) for v in expected]
    table = (["cycle", "pairing"], [[" ".join(map(str, cyc)), p]
                                    for cyc, p in zip(m.cycles, m.pairings)])
    return StepResult(ok, m.to_json(), tag=None if ok else "def:maslov.pairing",
                      tables={"maslov": table})


def h_qbundle_untwist(args, ctx) -> StepResult:
    c, _, _ = _cocycle_input(args, ctx)
    u = qbundle.untwist(c)
    ok = qbundle.check_untwisting(c, u)
    return StepResult(ok, u.to_json(), tag=None if ok else "lemma:untwist.descent")


def h_qbundle_reorder(args, ctx) -> StepResult:
    c, funcs, b = _cocycle_input(args, ctx)
    order = _order(_require(args, "order"))
    if funcs is None:
        c2 = qbundle.reorder_cocycle(c, order)
        rep = qbundle.verify(c2)
        return StepResult(rep.ok, {"cocycle": c2.to_json(), "verify": rep.to_json()},
                          tag=None if rep.ok else "lemma:reorder.cocycle")
    cells = int(args.get("cells_per_region", 1))
    tol = ctx.tol or 1e-8
    t = qbundle.TwistedGF(c, funcs, b)
    t2 = qbundle.reorder(t, order)
    before = qbundle.critical_values(t, cells)
    after = qbundle.critical_values(t2, cells)
    same = _same_multisets(before, after, tol)
    rep = qbundle.verify(t2.cocycle)
    glue = t2.check_gluing(cells_per_component=cells, seed=ctx.rng(2).numpy_seed())
    ok = same and rep.ok and glue.ok
    return StepResult(ok, {"cocycle": t2.cocycle.to_json(), "verify": rep.to_json(),
                           "gluing": glue.to_json(), "critical_values_preserved": same,
                           "critical_values": after},
                      tag=None if ok else "lemma:reorder.critical-values")


def _same_multisets(a: Mapping, b: Mapping, tol: float) -> bool:
    if set(a) != set(b):
        return False
    for k in a:
        if len(a[k]) != len(b[k]):
            return False
        for xs, ys in zip(a[k], b[k]):
            xs, ys = sorted(xs), sorted(ys)
            if len(xs) != len(ys) or any(abs(x - y) > tol for x, y in zip(xs, ys)):
                return False
    return True


def h_qbundle_assemble(args, ctx) -> StepResult:
    c, funcs, b = _cocycle_input(args, ctx)
    if funcs is None:
        raise SchemaError("assemble needs local generating functions")
    t = qbundle.TwistedGF(c, funcs, b)
    rep = qbundle.assemble_sigma(t, int(args.get("cells_per_region", 1)))
    return StepResult(True, rep.to_json())


# ---------------------------------------------------------------------------
# handlers: simplicial


def h_simplicial_bar(args, ctx) -> StepResult:
    Q = _monoid(_require(args, "monoid"), ctx)
    trunc = int(args.get("truncation", 5))
    F = simplicial.RightModule.regular(Q) if args.get("regular") else None
    B = simplicial.bar(F, Q, trunc)
    bad = B.check_identities()
    return StepResult(not bad, {"monoid": Q.name, "level_sizes": B.level_sizes(),
                                "identity_failures": [[n, list(map(str, t))] for n, t in bad[:10]]},
                      tag=None if not bad else "def:bar.simplicial")


def h_simplicial_bqq_check(args, ctx) -> StepResult:
    Q = _monoid(_require(args, "monoid"), ctx)
    rep = simplicial.bqq_contraction_check(Q, int(args.get("max_degree", 4)),
                                           bool(args.get("corrupt", False)))
    return StepResult(rep.ok, rep.to_json(), tag=None if rep.ok else "lemma:bqq.contraction")


def h_simplicial_homology(args, ctx) -> StepResult:
    coeff = args.get("coefficients", "Z")
    coeff = coeff if coeff in ("Z", None) else int(coeff)
    if args.get("monoid") is not None:
        Q = _monoid(args["monoid"], ctx)
        trunc = int(args.get("truncation", 5))
        F = simplicial.RightModule.regular(Q) if args.get("regular") else None
        S = simplicial.bar(F, Q, trunc)
    else:
        S = simplicial.simplicial_set_from_json(_data(_require(args, "file"), ctx))
        trunc = int(args.get("truncation", S.max_degree + 1))
    H = simplicial.realization_homology(S, trunc, coeff)
    return StepResult(True, {"valid_below": trunc, "coefficients": str(coeff or "Z"),
                             "homology": H.to_json()},
                      tables={"homology": homology_table(H)})


def _cover(args, ctx) -> qbundle.DirectedCover:
    name = args.get("cover")
    if name is not None:
        lib = simplicial.mv_cover_library()
        if name not in lib:
            raise InputError(f"unknown cover {name!r}; known: {sorted(lib)}")
        return lib[name]
    return qbundle.DirectedCover.from_json(_data(_require(args, "file"), ctx))


def h_simplicial_mv(args, ctx) -> StepResult:
    cov = _cover(args, ctx)
    Z, _ = simplicial.mv_blowup(cov)
    H_mv = simplicial.realization_homology(Z)
    H_base = simplicial.realization_homology(simplicial.base_simplicial_set(cov.base))
    ok = H_mv == H_base
    return StepResult(ok, {"simplices": {str(n): len(v) for n, v in Z.levels.items()},
                           "homology_mv": H_mv.to_json(), "homology_base": H_base.to_json()},
                      tag=None if ok else "prop:mv.equivalence",
                      tables={"homology": homology_table(H_mv)})


def h_simplicial_map(args, ctx) -> StepResult:
    data = _data(_require(args, "file"), ctx)
    Z = simplicial.simplicial_set_from_json(data["complex"])
    Q = _monoid(data["monoid"], ctx)
    labels = {}
    for key, val in data["labels"].items():
        a, b = (s.strip() for s in key.split(","))
        labels[(_vertex(a), _vertex(b))] = val
    m = simplicial.mv_simplicial_map(Z, simplicial.bar(None, Q, 2), labels)
    return StepResult(m.valid, m.to_json(), tag=None if m.valid else "def:mv.cocycle")


def _vertex(s: str):
    try:
        return int(s)
    except ValueError:
        return s


# ---------------------------------------------------------------------------
# bundled scenarios


def tube_library() -> list[tuple[str, quadform.QuadForm]]:
    """Twelve forms with ``n <= 2`` covering every index."""
    Q, d = quadform.QuadForm, quadform.diagonal
    half = Fraction(1, 2)
    return [("unit", quadform.unit()), ("(1)", d(1)), ("(-1)", d(-1)), ("(2)", d(2)),
            ("(-1/2)", d(-half)), ("diag(1,1)", d(1, 1)), ("diag(-1,-1)", d(-1, -1)),
            ("diag(1,-1)", d(1, -1)), ("h", quadform.hyperbolic(1)), ("diag(3,-2)", d(3, -2)),
            ("posdef", Q([[1, half], [half, 1]])), ("negdef", Q([[-2, 1], [1, -1]]))]


def h_bundled_tube_dq(args, ctx) -> StepResult:
    rows, table = [], []
    ok = True
    lib = tube_library()
    names = args.get("forms")
    if names is not None:
        lib = [(n, q) for n, q in lib if n in set(_order(names))]
    for name, q in lib:
        f = genfun.rigid_tube(q, 3)
        rep = genfun.tube_check(f, primes=(2, 3), points=int(args.get("points", 128)),
                                detailed=True)
        idx = quadform.invariants(q).index if q.dim else 0
        good = rep.consistent and rep.degree == idx
        ok &= good
        rows.append({"form": name, "index": idx, "degree": rep.degree,
                     "consistent": rep.consistent, "ok": good})
        table.append([name, idx, rep.degree, rep.consistent])
    return StepResult(ok, {"tubes": rows}, tag=None if ok else "prop:tube-recognition.degree",
                      tables={"tubes": (["form", "index", "degree", "consistent"], table)})


DOUBLE_V2 = {"g": "v*v", "fiber": ["v"], "alpha": "psi(v)", "alpha_support": {"v": [-3, 3]}}


def bundled_scenarios() -> dict[str, list[dict]]:
    """Named pipelines; each step is ``{"name", "module", "verb", "args"}``."""
    out: dict[str, list[dict]] = {"empty": []}
    out["double-v2"] = [{"name": "double", "module": "genfun", "verb": "double",
                         "args": {"file": DOUBLE_V2,
                                  "t": ["1/256", "1/64", "1/16"]}}]
    out["tube-DQ"] = [{"name": "tube-DQ", "module": "bundled", "verb": "tube-dq", "args": {}}]
    cocycle = []
    for name, sc in qbundle.scenario_library().items():
        cocycle.append({"name": f"{name}:verify", "module": "qbundle", "verb": "verify",
                        "args": {"scenario": name}, "expect_fail": not sc.verify_ok})
        if not sc.verify_ok:
            continue
        if sc.pairings:
            cocycle.append({"name": f"{name}:maslov", "module": "qbundle", "verb": "maslov",
                            "args": {"scenario": name, "expect": list(sc.pairings)}})
    cocycle += [
        {"name": "circle-3arc-maslov2:reorder", "module": "qbundle", "verb": "reorder",
         "args": {"scenario": "circle-3arc-maslov2", "order": "1,0,2"}},
        {"name": "circle-3arc-trivial:untwist", "module": "qbundle", "verb": "untwist",
         "args": {"scenario": "circle-3arc-trivial"}},
        {"name": "interval-4region:reorder", "module": "qbundle", "verb": "reorder",
         "args": {"scenario": "interval-4region", "order": "1,3,2,4"}},
        {"name": "triangle-2stars:reorder", "module": "qbundle", "verb": "reorder",
         "args": {"scenario": "triangle-2stars", "order": "b,a"}},
    ]
    out["cocycles"] = cocycle
    simp = [{"name": f"bqq:{m}", "module": "simplicial", "verb": "bqq-check",
             "args": {"monoid": m, "max_degree": 4}} for m in simplicial.monoid_library()]
    simp += [{"name": f"mv:{c}", "module": "simplicial", "verb": "mv", "args": {"cover": c}}
             for c in simplicial.mv_cover_library()]
    simp.append({"name": "homology:BZ/2", "module": "simplicial", "verb": "homology",
                 "args": {"monoid": "Z/2", "truncation": 5, "coefficients": 2}})
    out["simplicial"] = simp
    cutoff = [{"name": f"cutoff:{name}", "module": "quadform", "verb": "cutoff-check",
               "args": {"file": q.to_json(), "points": 200}}
              for name, q in tube_library() if q.dim]
    out["battery"] = (cutoff + out["double-v2"] + out["cocycles"] + out["simplicial"] +
                      out["tube-DQ"])
    return out


# ---------------------------------------------------------------------------
# dispatch


HANDLERS: dict[tuple[str, str], Callable[[Mapping, Context], StepResult]] = {
    ("quadform", "invariants"): h_quadform_invariants,
    ("quadform", "cutoff-check"): h_quadform_cutoff_check,
    ("symplin", "lift"): h_symplin_lift,
    ("symplin", "reduce"): h_symplin_reduce,
    ("homalg", "homology"): h_homalg_homology,
    ("homalg", "snf"): h_homalg_snf,
    ("homalg", "detect"): h_homalg_detect,
    ("genfun", "crit"): h_genfun_crit,
    ("genfun", "double"): h_genfun_double,
    ("genfun", "tube-check"): h_genfun_tube_check,
    ("genfun", "delta-check"): h_genfun_delta_check,
    ("qbundle", "verify"): h_qbundle_verify,
    ("qbundle", "reorder"): h_qbundle_reorder,
    ("qbundle", "untwist"): h_qbundle_untwist,
    ("qbundle", "maslov"): h_qbundle_maslov,
    ("qbundle", "assemble"): h_qbundle_assemble,
    ("simplicial", "mv"): h_simplicial_mv,
    ("simplicial", "bar"): h_simplicial_bar,
    ("simplicial", "bqq-check"): h_simplicial_bqq_check,
    ("simplicial", "homology"): h_simplicial_homology,
    ("simplicial", "map"): h_simplicial_map,
    ("bundled", "tube-dq"): h_bundled_tube_dq,
}


def run_step(step: Mapping, ctx: Context, report: Report) -> bool:
    """Run one step and append its record; returns whether the pipeline may continue."""
    name = step.get("name") or f"{step.get('module')} {step.get('verb')}"
    key = (step.get("module"), step.get("verb"))
    if key not in HANDLERS:
        raise SchemaError(f"unknown step {key[0]} {key[1]}")
    expect_fail = bool(step.get("expect_fail", False))
    start = time.perf_counter()
    record: dict = {"name": name, "module": key[0], "verb": key[1]}
    try:
        res = HANDLERS[key](step.get("args", {}), ctx)
    except InvariantViolation as exc:
        res = StepResult(False, None, exc.tag, str(exc))
    finally:
        report.timings[name] = time.perf_counter() - start
    passed = res.ok != expect_fail
    record["status"] = "pass" if passed else "fail"
    record["ok"] = res.ok
    if expect_fail:
        record["expected"] = "fail"
    if res.tag is not None:
        record["tag"] = res.tag
    if res.message:
        record["message"] = res.message
    record["result"] = res.result
    report.steps.append(record)
    for tname, table in res.tables.items():
        label = tname if len(report.steps) == 1 else f"{_safe(name)}.{tname}"
        report.tables[label] = table
    if not passed:
        report.exit_code = EXIT_INVARIANT
    return passed


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def run(steps: Sequence[Mapping], ctx: Context, command: str, halt: bool = True) -> Report:
    """Execute steps in order; a failing step halts the pipeline when ``halt``."""
    report = Report(command, ctx.seed)
    for k, step in enumerate(steps):
        if not run_step(step, ctx, report) and halt and k + 1 < len(steps):
            report.steps.append({"name": "halted", "status": "fail", "tag": StepFailure.tag,
                                 "result": {"after": step.get("name")}})
            break
    return report


def load_scenario(name_or_path: str, ctx: Context) -> list[dict]:
    lib = bundled_scenarios()
    if name_or_path in lib:
        return lib[name_or_path]
    data = load_json(name_or_path, ctx.base_dir)
    if not isinstance(data, Mapping) or not isinstance(data.get("steps", []), list):
        raise SchemaError("scenario must be an object with a list of steps")
    if "seed" in data:
        ctx.seed = int(data["seed"])
    if data.get("tol") is not None:
        ctx.tol = float(data["tol"])
        if ctx.tol <= 0:
            raise SchemaError("tolerances must be positive")
    ctx.base_dir = os.path.dirname(os.path.abspath(name_or_path))
    return list(data.get("steps", []))


# ---------------------------------------------------------------------------
# argument parsing


VERB_ARGS: dict[tuple[str, str], list[tuple[str, dict]]] = {
    ("quadform", "invariants"): [("file", {})],
    ("quadform", "cutoff-check"): [("file", {}), ("--points", {"type": int})],
    ("symplin", "lift"): [("--phi", {}), ("--path", {}), ("--radius", {"type": float})],
    ("symplin", "reduce"): [("--phi", {})],
    ("homalg", "homology"): [("file", {}), ("--primes", {})],
    ("homalg", "snf"): [("file", {})],
    ("homalg", "detect"): [("file", {}), ("--primes", {})],
    ("genfun", "crit"): [("file", {}), ("--x", {})],
    ("genfun", "double"): [("file", {}), ("--t", {"action": "append"}), ("--x", {})],
    ("genfun", "tube-check"): [("file", {}), ("--x", {}), ("--primes", {}),
                               ("--points", {"type": int}), ("--expect", {"type": int})],
    ("genfun", "delta-check"): [("file", {}), ("--c", {}), ("--primes", {}), ("--x", {}),
                                ("--delta-points", {"type": int})],
    ("qbundle", "verify"): [("file", {"nargs": "?"}), ("--scenario", {})],
    ("qbundle", "reorder"): [("file", {"nargs": "?"}), ("--scenario", {}), ("--order", {}),
                             ("--cells-per-region", {"type": int})],
    ("qbundle", "untwist"): [("file", {"nargs": "?"}), ("--scenario", {})],
    ("qbundle", "maslov"): [("file", {"nargs": "?"}), ("--scenario", {}),
                            ("--expect", {"type": int, "nargs": "+"})],
    ("qbundle", "assemble"): [("file", {"nargs": "?"}), ("--scenario", {}),
                              ("--cells-per-region", {"type": int})],
    ("simplicial", "mv"): [("file", {"nargs": "?"}), ("--cover", {})],
    ("simplicial", "bar"): [("--monoid", {}), ("--truncation", {"type": int}),
                            ("--regular", {"action": "store_true"})],
    ("simplicial", "bqq-check"): [("--monoid", {}), ("--max-degree", {"type": int}),
                                  ("--corrupt", {"action": "store_true"})],
    ("simplicial", "homology"): [("file", {"nargs": "?"}), ("--monoid", {}),
                                 ("--truncation", {"type": int}), ("--coefficients", {}),
                                 ("--regular", {"action": "store_true"})],
    ("simplicial", "map"): [("file", {})],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message, tag="cli:usage")


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0))
    parser.add_argument("--tol", type=float, default=d(None))
    parser.add_argument("--out", default=d(None))
    parser.add_argument("--format", choices=FORMATS, default=d("json"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gfcalc", description=__doc__.splitlines()[0])
    _globals(parser, False)
    mods = parser.add_subparsers(dest="module", required=True, parser_class=_Parser)
    verbs_by_module: dict[str, list[str]] = {}
    for mod, verb in VERB_ARGS:
        verbs_by_module.setdefault(mod, []).append(verb)
    for mod, verbs in verbs_by_module.items():
        mp = mods.add_parser(mod)
        _globals(mp, True)
        vs = mp.add_subparsers(dest="verb", required=True, parser_class=_Parser)
        for verb in verbs:
            vp = vs.add_parser(verb)
            _globals(vp, True)
            for flag, kw in VERB_ARGS[(mod, verb)]:
                vp.add_argument(flag, **kw)
    rp = mods.add_parser("run", help="run a bundled or file scenario")
    _globals(rp, True)
    rp.add_argument("scenario")
    rp.add_argument("--keep-going", action="store_true")
    mods.add_parser("list", help="list bundled scenarios")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.tol is not None and ns.tol <= 0:
            raise InputError("--tol must be positive", tag="cli:usage")
        ctx = Context(seed=ns.seed, tol=ns.tol)
        if ns.module == "list":
            sys.stdout.write(dumps({k: [s["name"] for s in v]
                                    for k, v in bundled_scenarios().items()}))
            return EXIT_PASS
        if ns.module == "run":
            steps = load_scenario(ns.scenario, ctx)
            report = run(steps, ctx, f"run {ns.scenario}", halt=not ns.keep_going)
        else:
            skip = {"module", "verb", "seed", "tol", "out", "format"}
            args = {k.replace("-", "_"): v for k, v in vars(ns).items()
                    if k not in skip and v is not None and v is not False}
            if ns.verb == "double" and "t" in args:
                args["t"] = [s for part in args["t"] for s in part.split(",")]
            report = run([{"name": f"{ns.module} {ns.verb}", "module": ns.module,
                           "verb": ns.verb, "args": args}], ctx, f"{ns.module} {ns.verb}")
        sys.stdout.write(emit(report, ns.format, ns.out))
        return report.exit_code
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except GfcalcError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
