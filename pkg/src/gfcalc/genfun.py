"""Linear-at-infinity generating functions.

A :class:`LinFn` is a function ``f(x, w, v) = w + g(x, v) + eps(x, w, v)`` on
``base x R x R^n`` whose perturbation ``eps`` vanishes outside a declared box.
This module implements stabilization by quadratic forms with a cut-off
(``oplus_b``), fiberwise critical points with Newton polishing, the doubling
construction, difference functions, and the homological tube and difference
checks based on cubical sublevel homology.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .cubical import CubicalField, cubical_sublevel_homology
from .errors import (BoxNotCertified, CriticalValueOutOfBand,
                     DegenerateCritical, InputError, OddDimension, TTooLarge,
                     ThresholdTooClose, ZeroNotRegular)
from .homalg import GradedAbGroup
from .quadform import (DEFAULT_PROFILE, QuadForm, as_fraction, cutoff_scale_fractions,
                       cutoff_scales, cutoff_support_halfwidths)

Box = dict[str, tuple[float, float]]

NEWTON_TOL = 1e-9
DEDUPE_RADIUS = 1e-6
DEGENERATE_EIG = 1e-8
DEGENERATE_PROBE = 1e-6
LOCAL_LEVEL = 4.0


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class LinFn:
    """``w + g + eps`` over a base, with declared support box and bound.

    ``fiber`` names the fiber coordinates in order; ``support`` maps ``"w"`` and
    each fiber name to an interval outside of which ``eps`` vanishes; ``b`` is
    an expression in the base variables (or ``None`` when no bound is declared).
    """

    g: ex.Expr
    epsilon: ex.Expr
    fiber: tuple[str, ...]
    support: Mapping[str, tuple[float, float]]
    b: ex.Expr | None = None
    feature_scale: float = 1.0
    base: Mapping = field(default_factory=lambda: {"type": "point"})

    def __post_init__(self):
        object.__setattr__(self, "fiber", tuple(self.fiber))
        sup = {k: (float(v[0]), float(v[1])) for k, v in dict(self.support).items()}
        for name in ("w",) + self.fiber:
            if name not in sup:
                sup[name] = (0.0, 0.0)
        object.__setattr__(self, "support", sup)
        allowed = set(self.base_vars) | {"w"} | set(self.fiber)
        extra = (self.g.variables() | self.epsilon.variables()) - allowed
        if extra:
            raise InputError(f"unknown variables {sorted(extra)}")
        if "w" in self.g.variables():
            raise InputError("g must not depend on w")
        if self.feature_scale <= 0:
            raise InputError("feature_scale must be positive")

    @property
    def n(self) -> int:
        return len(self.fiber)

    @property
    def base_vars(self) -> tuple[str, ...]:
        return base_variables(self.base)

    @property
    def coords(self) -> tuple[str, ...]:
        """Fiber-direction coordinates ``(w, v_1, ..., v_n)``."""
        return ("w",) + self.fiber

    def expr(self) -> ex.Expr:
        return ex.add(ex.var("w"), self.g, self.epsilon)

    def bound_value(self, x: Mapping[str, float]) -> float | None:
        if self.b is None:
            return None
        return float(ex.evaluate(self.b, list(x), np.array([list(x.values())]))[0]) \
            if x else float(self.b.evaluate({}))

    def max_bound(self) -> float | None:
        if self.b is None:
            return None
        return max(self.bound_value(x) for x in base_samples(self.base))

    def to_json(self) -> dict:
        return {
            "base": dict(self.base),
            "n": self.n,
            "fiber": list(self.fiber),
            "g": str(self.g),
            "epsilon": str(self.epsilon),
            "support": {k: [v[0], v[1]] for k, v in self.support.items()},
            "b": None if self.b is None else str(self.b),
            "feature_scale": self.feature_scale,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "LinFn":
        try:
            n = int(data.get("n", len(data.get("fiber", []))))
            fiber = tuple(data.get("fiber") or [f"v_{i + 1}" for i in range(n)])
            if len(fiber) != n:
                raise InputError("fiber names do not match n")
            b = data.get("b")
            return cls(
                g=ex.parse(data.get("g", 0)),
                epsilon=ex.parse(data.get("epsilon", 0)),
                fiber=fiber,
                support={k: tuple(v) for k, v in data.get("support", {}).items()},
                b=None if b is None else ex.parse(b),
                feature_scale=float(data.get("feature_scale", 1.0)),
                base=dict(data.get("base", {"type": "point"})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad function JSON: {exc}") from exc


def base_variables(base: Mapping) -> tuple[str, ...]:
    kind = base.get("type", "point")
    if kind == "point":
        return ()
    if kind in ("interval", "circle"):
        return (base.get("var", "x"),)
    if kind == "samples":
        return tuple(base["vars"])
    raise InputError(f"unknown base type {kind!r}")


def base_samples(base: Mapping, count: int = 33) -> list[dict[str, float]]:
    """Sample points of the base region (a single empty point for point bases)."""
    kind = base.get("type", "point")
    if kind == "point":
        return [{}]
    if kind == "samples":
        names = tuple(base["vars"])
        return [dict(zip(names, map(float, p))) for p in base["points"]]
    name = base.get("var", "x")
    if kind == "interval":
        lo, hi = base["range"]
        return [{name: float(t)} for t in np.linspace(lo, hi, count)]
    period = float(base.get("period", 1.0))
    return [{name: float(t)} for t in np.linspace(0.0, period, count, endpoint=False)]


@dataclass(frozen=True)
class CritPoint:
    """A fiberwise critical point with its Hessian signature and Legendrian image."""

    base_point: tuple[float, ...]
    location: tuple[float, ...]
    value: float
    index: int
    coindex: int
    base_derivative: tuple[float, ...]

    @property
    def legendrian(self) -> tuple[tuple[float, ...], tuple[float, ...], float]:
        return self.base_point, self.base_derivative, self.value

    def to_json(self) -> dict:
        return {"x": list(self.base_point), "location": list(self.location), "value": self.value,
                "index": self.index, "coindex": self.coindex,
                "dfdx": list(self.base_derivative)}


# ---------------------------------------------------------------------------
# construction helpers


def quadratic_expr(q: QuadForm, names: Sequence[str]) -> ex.Expr:
    """The polynomial ``sum_ij mat_ij u_i u_j`` in the given variables."""
    terms = []
    for i in range(q.dim):
        for j in range(i, q.dim):
            c = q.mat[i][j] * (1 if i == j else 2)
            if c:
                terms.append(ex.mul(ex.const(c), ex.var(names[i]), ex.var(names[j])))
    return ex.add(*terms) if terms else ex.ZERO


def gradient_exprs(q: QuadForm, names: Sequence[str]) -> list[ex.Expr]:
    """Components of ``grad q = 2 mat u``."""
    out = []
    for i in range(q.dim):
        terms = [ex.mul(ex.const(2 * q.mat[i][j]), ex.var(names[j]))
                 for j in range(q.dim) if q.mat[i][j]]
        out.append(ex.add(*terms))
    return out


def cutoff_expr(q: QuadForm, names: Sequence[str], b: ex.Expr | None) -> ex.Expr:
    """``chi_q(u / b)`` as an expression; ``b = 0`` gives the indicator of ``u = 0``."""
    if q.dim == 0:
        return ex.ONE
    comps = gradient_exprs(q, names)
    if b is None:
        raise InputError("oplus_b needs a bound b")
    if isinstance(b, ex.Const) and b.value == 0:
        return ex.mul(*[ex.call("iszero", c) for c in comps])
    scales = cutoff_scale_fractions(q)
    if isinstance(b, ex.Const):
        scaled = [ex.mul(ex.const(k / b.value), c) for k, c in zip(scales, comps)]
    else:
        scaled = [ex.mul(ex.const(k), c) / b for k, c in zip(scales, comps)]
    return ex.mul(*[ex.call("psi", s) for s in scaled])


def fresh_names(existing: Sequence[str], count: int, stem: str = "u") -> list[str]:
    taken = set(existing)
    out, k = [], 1
    while len(out) < count:
        name = f"{stem}_{k}"
        if name not in taken:
            out.append(name)
            taken.add(name)
        k += 1
    return out


def _bound_expr(b) -> ex.Expr:
    return b if isinstance(b, ex.Expr) else ex.const(b)


def oplus_b(f: LinFn, q: QuadForm, b=None, names: Sequence[str] | None = None,
            left: bool = False) -> LinFn:
    """``(f ⊕_b q)(x, w, v, u) = w + g + q(u) + chi_q(u / b) eps``.

    ``b`` defaults to the bound declared on ``f``.  With ``left=True`` the new
    coordinates are placed before the old ones (the left action ``q ⊕_b f``).
    """
    bexpr = _bound_expr(b) if b is not None else f.b
    if bexpr is None:
        raise InputError("no bound given and none declared on f")
    if q.dim == 0:
        return replace(f, b=bexpr)
    new = list(names) if names is not None else fresh_names(f.fiber + f.base_vars + ("w",), q.dim)
    if len(new) != q.dim or set(new) & (set(f.fiber) | {"w"} | set(f.base_vars)):
        raise InputError("bad names for stabilization coordinates")
    bmax = max(float(bexpr.evaluate(x)) if not x else
               float(ex.evaluate(bexpr, list(x), np.array([list(x.values())]))[0])
               for x in base_samples(f.base))
    if bmax < 0:
        raise InputError("bound must be non-negative")
    half = cutoff_support_halfwidths(q, bmax) if bmax > 0 else np.zeros(q.dim)
    support = dict(f.support)
    for name, h in zip(new, half):
        support[name] = (-float(h), float(h))
    eps = f.epsilon if ex.is_zero(f.epsilon) else ex.mul(cutoff_expr(q, new, bexpr), f.epsilon)
    fiber = tuple(new) + f.fiber if left else f.fiber + tuple(new)
    return LinFn(ex.add(f.g, quadratic_expr(q, new)), eps, fiber, support, bexpr,
                 f.feature_scale, f.base)


def oplus(f: LinFn, q: QuadForm, names: Sequence[str] | None = None,
          box_halfwidth: float | Sequence[float] | None = None) -> LinFn:
    """Plain stabilization ``w + g + q(u) + eps`` (not linear at infinity).

    The declared support in the new coordinates is only a search box for
    critical points, which all lie at ``u = 0``.
    """
    new = list(names) if names is not None else fresh_names(f.fiber + f.base_vars + ("w",), q.dim)
    if box_halfwidth is None:
        box_halfwidth = 2.0
    hw = np.broadcast_to(np.asarray(box_halfwidth, dtype=float), (q.dim,))
    support = dict(f.support)
    for name, h in zip(new, hw):
        support[name] = (-float(h), float(h))
    return LinFn(ex.add(f.g, quadratic_expr(q, new)), f.epsilon, f.fiber + tuple(new), support,
                 f.b, f.feature_scale, f.base)


def d_function(b=3) -> LinFn:
    """The one-variable function ``D(w)`` over a point, as ``w + (D(w) - w)``."""
    w = ex.var("w")
    return LinFn(ex.ZERO, ex.call("D", w) - w, (), {"w": (-2.0, 2.0)}, _bound_expr(b), 1.0)


def rigid_tube(q: QuadForm, b=3) -> LinFn:
    """``D ⊕_b q`` over a point."""
    return oplus_b(d_function(b), q, b)


def rename_fiber(f: LinFn, names: Sequence[str]) -> LinFn:
    """Rename the fiber coordinates positionally (``f.fiber[k] -> names[k]``)."""
    names = tuple(names)
    if len(names) != f.n or len(set(names)) != f.n or \
            set(names) & (set(f.base_vars) | {"w"}):
        raise InputError("bad fiber names")
    if names == f.fiber:
        return f
    tmp = {c: ex.var(f"__tmp{k}") for k, c in enumerate(f.fiber)}
    back = {f"__tmp{k}": ex.var(c) for k, c in enumerate(names)}

    def sub(e):
        return e.substitute(tmp).substitute(back)

    support = {c: f.support[c] for c in ("w",)}
    support.update({new: f.support[old] for old, new in zip(f.fiber, names)})
    return LinFn(sub(f.g), sub(f.epsilon), names, support, f.b, f.feature_scale, f.base)


def permute_fiber(f: LinFn, order: Sequence[int]) -> LinFn:
    """``f ∘ a^{-1}`` for the coordinate permutation placing old coordinate
    ``order[k]`` in position ``k``."""
    order = list(order)
    if sorted(order) != list(range(f.n)):
        raise InputError("order must be a permutation of the fiber coordinates")
    return replace(f, fiber=tuple(f.fiber[k] for k in order))


def with_base(f: LinFn, base: Mapping) -> LinFn:
    return replace(f, base=dict(base))


# ---------------------------------------------------------------------------
# checks of the definition


def verify_support(f: LinFn, samples: int = 9, tol: float = 1e-12) -> bool:
    """Check ``eps == 0`` on the boundary shell of the declared support box."""
    coords = list(f.coords)
    for x in base_samples(f.base, 9):
        for k, name in enumerate(coords):
            lo, hi = f.support[name]
            for face in (lo, hi):
                axes = [np.linspace(*f.support[c], samples) if c != name else np.array([face])
                        for c in coords]
                pts = np.array(list(itertools.product(*axes)))
                vals = _eval_at(f.epsilon, f, x, pts)
                if np.max(np.abs(vals)) > tol:
                    return False
    return True


def _eval_at(e: ex.Expr, f: LinFn, x: Mapping[str, float], pts: np.ndarray) -> np.ndarray:
    env = {k: np.full(pts.shape[0], v) for k, v in x.items()}
    env.update({c: pts[:, k] for k, c in enumerate(f.coords)})
    out = e.evaluate(env)
    return np.broadcast_to(np.asarray(out, dtype=float), (pts.shape[0],)).copy()


def max_abs_epsilon(f: LinFn, samples: int = 41) -> float:
    """Grid-sampled ``max |eps|`` over the support box and the base."""
    best = 0.0
    axes = [np.linspace(*f.support[c], samples) if f.support[c][1] > f.support[c][0]
            else np.array([f.support[c][0]]) for c in f.coords]
    pts = np.array(list(itertools.product(*axes)))
    for x in base_samples(f.base, 9):
        best = max(best, float(np.max(np.abs(_eval_at(f.epsilon, f, x, pts)))))
    return best


def verify_bound(f: LinFn, safety: float = 1.05, samples: int = 41) -> bool:
    """Sampled check that the declared ``b`` bounds ``|eps|`` (with a safety factor)."""
    if f.b is None:
        return False
    axes = [np.linspace(*f.support[c], samples) if f.support[c][1] > f.support[c][0]
            else np.array([f.support[c][0]]) for c in f.coords]
    pts = np.array(list(itertools.product(*axes)))
    for x in base_samples(f.base, 9):
        if np.max(np.abs(_eval_at(f.epsilon, f, x, pts))) > safety * f.bound_value(x) + 1e-12:
            return False
    return True


def g_at_infinity(f: LinFn, x: Mapping[str, float], v: Sequence[float]) -> float:
    """``f(x, w, v) - w`` for ``w`` beyond the support box (recovers ``g``)."""
    w = f.support["w"][1] + 10.0 * (1.0 + abs(f.support["w"][1]))
    pt = np.array([[w] + list(v)])
    return float(_eval_at(f.expr(), f, x, pt)[0] - w)


# ---------------------------------------------------------------------------
# critical points


def find_critical(e: ex.Expr, names: Sequence[str], box: Sequence[tuple[float, float]],
                  fixed: Mapping[str, float], spacing: float, chunk: int = 40000,
                  check_degenerate: bool = True) -> list[tuple[np.ndarray, float, np.ndarray]]:
    """Critical points of ``e`` in the variables ``names`` inside ``box``.

    The box is subdivided adaptively: a cell survives while every gradient
    component at its centre is small enough, relative to the entrywise Hessian
    bounds sampled so far, for a critical point to lie inside it.  Once cells
    are within ``LOCAL_LEVEL`` times the target spacing the bound uses the
    Hessians at the cell and its parent, with a factor two margin.  Cells are halved until their
    sides are at most ``spacing``; the surviving centres are Newton-polished
    and deduplicated.  Returns ``(location, value, hessian)`` triples sorted by
    location.
    """
    d = len(names)
    if d == 0:
        return []
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    width = hi - lo
    flat = width <= 0
    levels = 0
    while np.prod(np.where(flat, 1.0, np.ceil(width / (spacing * 2.0 ** levels)))) > 4096:
        levels += 1
    counts = np.where(flat, 1, np.ceil(width / (spacing * 2.0 ** levels)).astype(int))
    side = np.where(flat, 0.0, width / np.maximum(counts, 1))
    axes = [lo[k] + side[k] * (np.arange(counts[k]) + 0.5) for k in range(d)]
    centres = np.array(list(itertools.product(*axes)))
    habs = np.zeros((d, d))
    parent_h = None
    while True:
        grads = np.empty((centres.shape[0], d))
        hess = np.empty((centres.shape[0], d, d))
        for start in range(0, centres.shape[0], chunk):
            J = ex.jet(e, names, centres[start:start + chunk], fixed)
            grads[start:start + chunk] = np.abs(J.grad)
            hess[start:start + chunk] = np.abs(J.hess)
        habs = np.maximum(habs, np.max(hess, axis=0))
        if parent_h is not None and np.all(side[~flat] <= LOCAL_LEVEL * spacing):
            # fine cells: the Hessian is nearly constant, bound it locally
            local = np.maximum(hess, parent_h)
            reach = 2.0 * np.einsum("nkl,l->nk", local, 0.5 * side) + 1e-12
        else:
            reach = (1.5 * habs @ (0.5 * side) + 1e-12)[None, :]
        keep = np.all(grads <= reach, axis=1)
        centres = centres[keep]
        hess = hess[keep]
        if centres.shape[0] == 0 or np.all(side[~flat] <= spacing * (1 + 1e-12)):
            break
        side = side / np.where(flat, 1.0, 2.0)
        offsets = np.array(list(itertools.product(
            *[(0.0,) if flat[k] else (-0.5, 0.5) for k in range(d)]))) * side
        parent_h = np.repeat(hess, offsets.shape[0], axis=0)
        centres = (centres[:, None, :] + offsets[None, :, :]).reshape(-1, d)
    if centres.shape[0] == 0:
        return []
    pts = _newton(e, names, fixed, centres, lo, hi)
    if pts.shape[0] == 0:
        return []
    J = ex.jet(e, names, pts, fixed)
    good = np.linalg.norm(J.grad, axis=1) <= NEWTON_TOL
    inside = np.all((pts >= lo - 1e-9) & (pts <= hi + 1e-9), axis=1)
    pts = _dedupe(pts[good & inside])
    if pts.shape[0] == 0:
        return []
    J = ex.jet(e, names, pts, fixed)
    out = []
    for k in range(pts.shape[0]):
        H = J.hess[k]
        if check_degenerate and _is_degenerate(e, names, fixed, pts[k], H):
            raise DegenerateCritical(f"degenerate critical point at {pts[k].tolist()}")
        out.append((pts[k], float(J.val[k]), H))
    return out


def _is_degenerate(e, names, fixed, p: np.ndarray, H: np.ndarray) -> bool:
    """Small Hessian eigenvalue, or curvature along its eigenvector changing sign nearby.

    Rounding stops Newton at distance about ``1e-8`` from a cubic degeneracy,
    where the eigenvalue can still exceed ``DEGENERATE_EIG``; the sign probe
    at ``p +- DEGENERATE_PROBE e`` catches that case.
    """
    lam, vec = np.linalg.eigh(H)
    k = int(np.argmin(np.abs(lam)))
    if abs(lam[k]) < DEGENERATE_EIG:
        return True
    e_k = vec[:, k]
    probe = np.array([p + DEGENERATE_PROBE * e_k, p - DEGENERATE_PROBE * e_k])
    Hp = ex.jet(e, names, probe, fixed).hess
    curv = np.einsum("i,nij,j->n", e_k, Hp, e_k)
    return bool(np.any(np.sign(curv) != np.sign(lam[k])))


def _newton(e, names, fixed, X, lo, hi, maxit: int = 60) -> np.ndarray:
    span = np.maximum(hi - lo, 1e-9)
    X = X.copy()
    active = np.ones(X.shape[0], bool)
    for _ in range(maxit):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        J = ex.jet(e, names, X[idx], fixed)
        # stop on step size, not gradient size: degenerate points converge
        # only linearly and must be followed until their Hessian is visibly singular
        gn = np.linalg.norm(J.grad, axis=1)
        conv = gn == 0.0
        active[idx[conv]] = False
        work = idx[~conv]
        if work.size == 0:
            break
        H = J.hess[~conv]
        g = J.grad[~conv]
        det_ok = np.abs(np.linalg.det(H)) > 1e-300
        step = np.zeros_like(g)
        if np.any(det_ok):
            try:
                step[det_ok] = np.linalg.solve(H[det_ok], g[det_ok][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step[det_ok] = np.einsum("nij,nj->ni", np.linalg.pinv(H[det_ok]), g[det_ok])
        X[work] -= step
        bad = (~det_ok) | np.any((X[work] < lo - 0.25 * span) | (X[work] > hi + 0.25 * span),
                                 axis=1) | ~np.all(np.isfinite(X[work]), axis=1)
        active[work[bad]] = False
        small = np.linalg.norm(step, axis=1) < 1e-15 * (1 + np.linalg.norm(X[work], axis=1))
        active[work[small]] = False
    return X[np.all(np.isfinite(X), axis=1)]


def _dedupe(pts: np.ndarray) -> np.ndarray:
    if pts.shape[0] == 0:
        return pts
    pts = pts[np.lexsort(pts.T[::-1])]
    out: list[np.ndarray] = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= DEDUPE_RADIUS for q in out):
            out.append(p)
    return np.array(out)


def _as_base_point(f_base_vars: Sequence[str], x) -> dict[str, float]:
    if x is None:
        x = {}
    if isinstance(x, Mapping):
        pt = {k: float(v) for k, v in x.items()}
    else:
        vals = np.atleast_1d(np.asarray(x, dtype=float)).tolist()
        pt = dict(zip(f_base_vars, vals))
    if set(pt) != set(f_base_vars):
        raise InputError(f"base point must give values for {list(f_base_vars)}")
    return pt


def critical_points(f: LinFn, x=None, spacing: float | None = None) -> list[CritPoint]:
    """All fiber-critical points of ``f(x, .)`` inside the support box.

    Seeds sit on a grid of spacing ``feature_scale / 16`` unless ``spacing`` is
    given.  Raises :class:`DegenerateCritical` when a fiber Hessian has an
    eigenvalue of modulus below ``1e-8``.
    """
    pt = _as_base_point(f.base_vars, x)
    if ex.is_zero(f.epsilon):
        return []
    sp = spacing if spacing is not None else f.feature_scale / 16.0
    coords = list(f.coords)
    box = [f.support[c] for c in coords]
    found = find_critical(f.expr(), coords, box, pt, sp)
    return _critpoints(f.expr(), coords, list(f.base_vars), pt, found)


def _critpoints(e: ex.Expr, coords, base_vars, pt, found) -> list[CritPoint]:
    out = []
    for loc, val, H in found:
        eig = np.linalg.eigvalsh(H)
        dfdx: tuple[float, ...] = ()
        if base_vars:
            allnames = base_vars + coords
            P = np.array([[pt[b] for b in base_vars] + loc.tolist()])
            J = ex.jet(e, allnames, P)
            dfdx = tuple(float(v) for v in J.grad[0, :len(base_vars)])
        out.append(CritPoint(tuple(pt[b] for b in base_vars), tuple(float(v) for v in loc),
                             val, int(np.sum(eig < 0)), int(np.sum(eig > 0)), dfdx))
    return out


# ---------------------------------------------------------------------------
# doubling


def d_t(w, t: float):
    """``D_t(w) = w + (1/4 + t)(D(w) - w)``."""
    w = np.asarray(w, dtype=float)
    return w + (0.25 + t) * (ex.d_profile(w) - w)


def double_radius(t: float) -> float:
    """``r(t) = (4/sqrt 3) sqrt(t/(1 + 4t))``, the critical points of ``D_t``."""
    return 4.0 / math.sqrt(3.0) * math.sqrt(t / (1.0 + 4.0 * t))


def double_shift(t: float) -> float:
    """``s(t) = -D_t(r(t))``; the critical values of ``D_t`` are ``-+ s(t)``."""
    return float(-d_t(double_radius(t), t))


@dataclass(frozen=True)
class DoublingCheck:
    transition_points: int
    min_gradient: float
    max_perturbation: float
    ok: bool


def double(g: ex.Expr, fiber: Sequence[str], alpha: ex.Expr, t, alpha_support: Box,
           base: Mapping | None = None, feature_scale: float = 1.0,
           b=3, samples: int = 41) -> tuple[LinFn, DoublingCheck]:
    """``f^t(x, w, v) = g(x, v) + w + (1/4 + t) alpha(x, v) (D(w) - w)``.

    ``alpha`` must equal 1 near the critical set of ``g`` and vanish outside
    ``alpha_support``.  The a-posteriori check samples the transition region
    ``0 < alpha < 1`` and requires
    ``|dg/dv| > (1/4 + t) max_{|w| <= r(t)} |D(w) - w| |dalpha/dv|``; it raises
    :class:`TTooLarge` otherwise.
    """
    base = dict(base or {"type": "point"})
    t_exact = as_fraction(t)
    t = float(t_exact)
    if not 0 < t < 0.75:
        raise InputError("doubling parameter must satisfy 0 < t < 3/4")
    fiber = tuple(fiber)
    w = ex.var("w")
    coef = ex.const(Fraction(1, 4) + t_exact)
    eps = ex.mul(coef, alpha, ex.call("D", w) - w)
    support = {"w": (-2.0, 2.0)}
    support.update({k: tuple(map(float, v)) for k, v in alpha_support.items()})
    f = LinFn(g, eps, fiber, support, _bound_expr(b), feature_scale, base)
    check = _doubling_check(g, fiber, alpha, t, support, base, samples)
    if not check.ok:
        raise TTooLarge(f"transition-region inequality fails for t={t}: "
                        f"min |dg/dv| = {check.min_gradient:.3g} <= {check.max_perturbation:.3g}")
    return f, check


def _doubling_check(g, fiber, alpha, t, support, base, samples) -> DoublingCheck:
    r = double_radius(t)
    dw = abs(float(ex.d_profile(r)) - r)
    if not fiber:
        return DoublingCheck(0, math.inf, 0.0, True)
    axes = [np.linspace(*support[c], samples) for c in fiber]
    pts = np.array(list(itertools.product(*axes)))
    count, gmin, pmax = 0, math.inf, 0.0
    for x in base_samples(base, 9):
        a = ex.jet(alpha, list(fiber), pts, x)
        gj = ex.jet(g, list(fiber), pts, x)
        trans = (a.val > 1e-12) & (a.val < 1 - 1e-12)
        if not np.any(trans):
            continue
        count += int(np.sum(trans))
        gn = np.linalg.norm(gj.grad[trans], axis=1)
        an = np.linalg.norm(a.grad[trans], axis=1)
        pert = (0.25 + t) * dw * an
        gmin = min(gmin, float(np.min(gn)))
        pmax = max(pmax, float(np.max(pert)))
        if np.any(gn <= pert):
            return DoublingCheck(count, gmin, pmax, False)
    return DoublingCheck(count, gmin, pmax, True)


# ---------------------------------------------------------------------------
# difference functions


def primed(name: str) -> str:
    return name + "p"


@dataclass(frozen=True)
class DeltaFn:
    """``w - w' + G + eps(x, w, v) - eps'(x, w', v')`` with interleaved fiber pairs.

    ``pairs`` lists the fiber coordinate pairs ``(v_k, v'_k)`` in order; the full
    coordinate order is ``(w, w', v_1, v'_1, ...)``.
    """

    G: ex.Expr
    epsilon: ex.Expr
    epsilon_p: ex.Expr
    pairs: tuple[tuple[str, str], ...]
    support: Mapping[str, tuple[float, float]]
    b: ex.Expr | None = None
    feature_scale: float = 1.0
    base: Mapping = field(default_factory=lambda: {"type": "point"})

    @property
    def coords(self) -> tuple[str, ...]:
        return ("w", "wp") + tuple(c for p in self.pairs for c in p)

    @property
    def base_vars(self) -> tuple[str, ...]:
        return base_variables(self.base)

    def expr(self) -> ex.Expr:
        return ex.add(ex.var("w"), ex.neg(ex.var("wp")), self.G, self.epsilon,
                      ex.neg(self.epsilon_p))

    def unprimed_slice(self) -> LinFn:
        """``F(x, w, 0, v_1, 0, ...)`` as a linear-at-infinity function of ``(w, v)``."""
        zero = {c: ex.ZERO for c in ("wp",) + tuple(p[1] for p in self.pairs)}
        g = self.G.substitute(zero)
        eps = ex.add(self.epsilon, ex.neg(self.epsilon_p.substitute(zero)))
        fib = tuple(p[0] for p in self.pairs)
        sup = {c: self.support[c] for c in ("w",) + fib}
        return LinFn(g, eps, fib, sup, self.b, self.feature_scale, self.base)


def difference(f: LinFn) -> DeltaFn:
    """``delta f(x, v_1, v'_1, ...) = f(x, w, v) - f(x, w', v')``."""
    ren = {c: ex.var(primed(c)) for c in f.coords}
    G = ex.add(f.g, ex.neg(f.g.substitute(ren)))
    pairs = tuple((c, primed(c)) for c in f.fiber)
    support = dict(f.support)
    for c in f.coords:
        support[primed(c)] = f.support[c]
    return DeltaFn(G, f.epsilon, f.epsilon.substitute(ren), pairs, support, f.b,
                   f.feature_scale, f.base)


def interleave_coords(names: Sequence[str]) -> tuple[str, ...]:
    """``(v_1, ..., v_n) -> (v_1, v'_1, ..., v_n, v'_n)``."""
    return tuple(c for n in names for c in (n, primed(n)))


def deinterleave_coords(coords: Sequence[str]) -> tuple[str, ...]:
    return tuple(coords[0::2])


def oplus_b_delta(F: DeltaFn, Q: QuadForm, b=None) -> DeltaFn:
    """``F ⊕^delta_b Q`` for a form ``Q`` in interleaved coordinates ``(u_1, u'_1, ...)``."""
    if Q.dim % 2:
        raise OddDimension("oplus_b_delta needs an even-dimensional form")
    bexpr = _bound_expr(b) if b is not None else F.b
    if bexpr is None:
        raise InputError("no bound given and none declared")
    if Q.dim == 0:
        return replace(F, b=bexpr)
    m = Q.dim // 2
    taken = set(F.coords) | set(F.base_vars)
    new = fresh_names(sorted(taken), m)
    names = interleave_coords(new)
    zero_p = {primed(u): ex.ZERO for u in new}
    zero_u = {u: ex.ZERO for u in new}
    chi = cutoff_expr(Q, names, bexpr)
    chi_u = chi.substitute(zero_p)
    chi_p = chi.substitute(zero_u)
    bmax = max(float(ex.evaluate(bexpr, list(x), np.array([list(x.values())]))[0]) if x
               else float(bexpr.evaluate({})) for x in base_samples(F.base))
    support = dict(F.support)
    if bmax > 0:
        # support of chi_Q(b^{-1}(u, 0)) in u, and likewise in u'
        A = 2.0 * Q.array()
        idx_u, idx_p = np.arange(0, 2 * m, 2), np.arange(1, 2 * m, 2)
        for idx, nm in ((idx_u, new), (idx_p, [primed(u) for u in new])):
            sub = A[:, idx]
            radii = bmax * float(DEFAULT_PROFILE.support_radius) / cutoff_scales(Q)
            h = _slice_support(sub, radii)
            for name, hw in zip(nm, h):
                support[name] = (-hw, hw)
    else:
        for name in names:
            support[name] = (0.0, 0.0)
    eps = F.epsilon if ex.is_zero(F.epsilon) else ex.mul(chi_u, F.epsilon)
    eps_p = F.epsilon_p if ex.is_zero(F.epsilon_p) else ex.mul(chi_p, F.epsilon_p)
    pairs = F.pairs + tuple((u, primed(u)) for u in new)
    return DeltaFn(ex.add(F.G, quadratic_expr(Q, names)), eps, eps_p, pairs, support, bexpr,
                   F.feature_scale, F.base)


def _slice_support(A: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Half-widths of a box containing ``{y : |(A y)_j| < r_j for all j}`` (A of full column rank)."""
    pinv = np.linalg.pinv(A)
    return np.abs(pinv) @ r


def delta_critical_points(F: DeltaFn, x=None, spacing: float | None = None) -> list[CritPoint]:
    """Critical points of ``F(x, .)`` in its support box."""
    pt = _as_base_point(F.base_vars, x)
    sp = spacing if spacing is not None else F.feature_scale / 16.0
    coords = list(F.coords)
    box = [F.support[c] for c in coords]
    found = find_critical(F.expr(), coords, box, pt, sp)
    return _critpoints(F.expr(), coords, list(F.base_vars), pt, found)


# ---------------------------------------------------------------------------
# sampling on certified boxes


def _graded_axis(lo: float, hi: float, core: tuple[float, float], outer: float,
                 count: int, tail: int) -> np.ndarray:
    """Axis that is uniform on ``core`` and geometric out to ``[-outer, outer]``."""
    c0, c1 = core
    ncore = count - 2 * tail
    inner = np.linspace(c0, c1, ncore)
    h = inner[1] - inner[0]

    def side(extent):
        if extent <= h or tail == 0:
            return np.array([])
        # geometric steps h*rho^k summing to extent
        lo_r, hi_r = 1.0, 1e6
        for _ in range(200):
            mid = math.sqrt(lo_r * hi_r)
            s = h * sum(mid ** k for k in range(1, tail + 1))
            lo_r, hi_r = (mid, hi_r) if s < extent else (lo_r, mid)
        rho = math.sqrt(lo_r * hi_r)
        steps = h * rho ** np.arange(1, tail + 1)
        pos = np.cumsum(steps)
        return pos * (extent / pos[-1])

    right = c1 + side(outer - c1)
    left = c0 - side(c0 + outer)
    return np.concatenate([left[::-1], inner, right])


def _stratum_values(e: ex.Expr, names: Sequence[str], box: Sequence[tuple[float, float]],
                    fixed: Mapping[str, float], spacing: float) -> list[float]:
    """Critical values of ``e`` restricted to every open face of ``box`` (including the interior)."""
    vals: list[float] = []
    d = len(names)
    for choice in itertools.product((None, 0, 1), repeat=d):
        fix = dict(fixed)
        free, fbox = [], []
        for k, c in enumerate(choice):
            if c is None:
                free.append(names[k])
                fbox.append(box[k])
            else:
                fix[names[k]] = box[k][c]
        if not free:
            vals.append(float(e.evaluate({k: float(v) for k, v in fix.items()})))
            continue
        for loc, val, _ in find_critical(e, free, fbox, fix, spacing, check_degenerate=False):
            if np.all([(loc[j] > fbox[j][0] + 1e-9) and (loc[j] < fbox[j][1] - 1e-9)
                       for j in range(len(free))]):
                vals.append(val)
    return vals


@dataclass(frozen=True)
class BoxPlan:
    """A certified sampling box for the pair ``(f <= upper, f <= lower)``."""

    axes: tuple[np.ndarray, ...]
    coords: tuple[str, ...]
    upper: float
    lower: float
    W: float
    stratum_values: tuple[float, ...]


def _fiber_box(f: LinFn, grow: float) -> list[tuple[float, float]]:
    out = []
    for c in f.fiber:
        lo, hi = f.support[c]
        pad = max(0.5, 0.1 * (hi - lo)) * grow
        out.append((lo - pad, hi + pad))
    return out


def _jitter(k: int) -> float:
    # deterministic irrational-looking offsets keep samples off thresholds
    return ((k + 1) * 0.6180339887498949) % 1.0


def plan_box(f: LinFn, x: Mapping[str, float], upper: float, lower: float | None,
             crit_values: Sequence[float], points: int = 128, tail: int = 16,
             delta: bool = False) -> BoxPlan:
    """Choose a sampling box on which the sublevel pair of ``f`` (or ``delta f``) is certified.

    Outside its support ``f = w + g(v)``, so stratified critical points of ``f``
    on a box ``[-W, W] x V`` lie either in the interior or on the faces
    ``w = +-W`` over critical points of ``g`` restricted to faces of ``V``.  For
    ``delta f`` the stratified critical values are differences of these.  The
    box is accepted when none of its boundary stratified values falls in
    ``[lower, upper]``.
    """
    crit_values = list(crit_values)
    if lower is None:
        lowest = min(crit_values) if crit_values else upper
        if delta:
            lowest = min([upper] + [a - b for a in crit_values for b in crit_values])
        lower = min(lowest, upper) - 1.0
    wlo, whi = f.support["w"]
    for grow in (1.0, 1.5, 2.25, 3.5, 5.0):
        V = _fiber_box(f, grow)
        sp = min([f.feature_scale / 4.0] + [(hi - lo) / 24.0 for lo, hi in V]) if V else 1.0
        gvals = _stratum_values(f.g, list(f.fiber), V, x, sp) if V else \
            [float(f.g.evaluate(dict(x)))]
        span = max(abs(upper), abs(lower), *(abs(v) for v in gvals), abs(wlo), abs(whi), 1.0)
        W = 4.0 * span + 10.0 + max(abs(wlo), abs(whi))
        if delta:
            W *= 2.0
        face = [s * W + c for s in (-1.0, 1.0) for c in gvals]
        strat = crit_values + face
        if delta:
            boundary = [a - b for a in strat for b in strat
                        if not (a in crit_values and b in crit_values)]
        else:
            boundary = face
        margin = 1e-3 * (1.0 + abs(lower) + abs(upper))
        if all(v < lower - margin or v > upper + margin for v in boundary):
            break
    else:
        raise BoxNotCertified("no box avoids boundary critical values in the sublevel window")
    core = (min(wlo, -1.0) - 0.5, max(whi, 1.0) + 0.5)
    w_axis = _graded_axis(-W, W, core, W, points, tail)
    names = ("w",) + f.fiber
    axes = [w_axis] + [np.linspace(lo, hi, points) for lo, hi in V]
    return BoxPlan(tuple(axes), names, float(upper), float(lower), float(W), tuple(boundary))


def _jittered(axes: Sequence[np.ndarray], attempt: int) -> list[np.ndarray]:
    out = []
    for k, a in enumerate(axes):
        h = np.min(np.diff(a))
        out.append(a + 1e-3 * h * _jitter(k + 7 * attempt) * math.sqrt(2.0))
    return out


def sample_field(f: LinFn, x: Mapping[str, float], axes: Sequence[np.ndarray]) -> CubicalField:
    mesh = np.meshgrid(*axes, indexing="ij")
    env = {k: float(v) for k, v in x.items()}
    env.update({c: m for c, m in zip(f.coords, mesh)})
    vals = np.broadcast_to(np.asarray(f.expr().evaluate(env), dtype=float), mesh[0].shape)
    return CubicalField(axes, np.array(vals), certified=True)


def sample_delta_field(f: LinFn, x: Mapping[str, float], axes: Sequence[np.ndarray],
                       axes_p: Sequence[np.ndarray] | None = None) -> CubicalField:
    """Sample ``f(w, v) - f(w', v')`` on the product grid ``axes x axes_p``."""
    axes_p = axes if axes_p is None else axes_p
    single = sample_field(f, x, axes).values
    single_p = sample_field(f, x, axes_p).values
    d = single.ndim
    a = single.reshape(single.shape + (1,) * d)
    b = single_p.reshape((1,) * d + single_p.shape)
    vals = a - b
    # interleave axes: (w, w', v_1, v'_1, ...)
    order = [i for k in range(d) for i in (k, d + k)]
    vals = np.transpose(vals, order)
    full_axes = [ax for k in range(d) for ax in (axes[k], axes_p[k])]
    return CubicalField(full_axes, np.ascontiguousarray(vals), certified=True)


def sublevel_homology(f: LinFn, x=None, upper: float = 0.0, lower: float | None = None,
                      coefficients="Z", points: int = 128, tail: int | None = None,
                      crit=None) -> GradedAbGroup:
    """``H_*(f(x, .) <= upper, f(x, .) <= lower)`` on a certified box.

    ``lower=None`` means below every critical value (the ``-infinity`` end).
    """
    pt = _as_base_point(f.base_vars, x)
    crit = critical_points(f, pt) if crit is None else crit
    tail = max(2, points // 8) if tail is None else tail
    plan = plan_box(f, pt, upper, lower, [c.value for c in crit], points, tail)
    for attempt in range(5):
        field_ = sample_field(f, pt, _jittered(plan.axes, attempt))
        try:
            return cubical_sublevel_homology(field_, (plan.upper, plan.lower), coefficients)
        except ThresholdTooClose:
            continue
    raise ThresholdTooClose("could not resample away from the thresholds")


def delta_sublevel_homology(f: LinFn, x=None, upper: float = 0.0, lower: float | None = None,
                            coefficients="Z", points: int = 32, tail: int | None = None,
                            crit=None) -> GradedAbGroup:
    """``H_*(delta f <= upper, delta f <= lower)`` on a certified product box."""
    pt = _as_base_point(f.base_vars, x)
    crit = critical_points(f, pt) if crit is None else crit
    tail = max(2, points // 6) if tail is None else tail
    plan = plan_box(f, pt, upper, lower, [c.value for c in crit], points, tail, delta=True)
    for attempt in range(5):
        # distinct offsets on the two factors keep grid differences off the thresholds
        field_ = sample_delta_field(f, pt, _jittered(plan.axes, attempt),
                                    _jittered(plan.axes, attempt + 11))
        try:
            return cubical_sublevel_homology(field_, (plan.upper, plan.lower), coefficients)
        except ThresholdTooClose:
            continue
    raise ThresholdTooClose("could not resample away from the thresholds")


# ---------------------------------------------------------------------------
# tube detection and difference homology


@dataclass(frozen=True)
class TubeReport:
    degree: int | None
    homology: GradedAbGroup
    field_dims: Mapping[int, Mapping[int, int]]
    consistent: bool
    critical_values: tuple[float, ...]

    def to_json(self) -> dict:
        return {"degree": self.degree, "homology": self.homology.to_json(),
                "field_dims": {str(p): {str(k): v for k, v in d.items()}
                               for p, d in self.field_dims.items()},
                "consistent": self.consistent,
                "critical_values": [round(v, 12) for v in self.critical_values]}


def _uct_dims(H: GradedAbGroup, p: int) -> dict[int, int]:
    """Field dimensions predicted by universal coefficients from integral homology."""
    out: dict[int, int] = {}
    for k, g in H.degrees:
        out[k] = out.get(k, 0) + g.free + sum(1 for t in g.torsion if t % p == 0)
        tor = sum(1 for t in g.torsion if t % p == 0)
        if tor:
            out[k + 1] = out.get(k + 1, 0) + tor
    return {k: v for k, v in out.items() if v}


def tube_check(f: LinFn, x=None, primes: Sequence[int] = (2, 3), points: int = 128,
               detailed: bool = False):
    """Degree ``i`` with ``H_*(f <= 0, f <= -inf) ≅ Z[i]``, or ``None``.

    Integral homology comes from Smith normal form on the reduced cubical
    complex; the ``F_p`` dimensions for ``primes`` are cross-checked against
    universal coefficients.  Raises :class:`ZeroNotRegular` when a critical
    value is within ``1e-6`` of 0.
    """
    pt = _as_base_point(f.base_vars, x)
    crit = critical_points(f, pt)
    if any(abs(c.value) <= 1e-6 for c in crit):
        raise ZeroNotRegular("0 is (numerically) a critical value")
    H = sublevel_homology(f, pt, 0.0, None, "Z", points, crit=crit)
    dims = {}
    consistent = True
    for p in primes:
        Hp = sublevel_homology(f, pt, 0.0, None, p, points, crit=crit)
        dims[p] = {k: g.free for k, g in Hp.degrees}
        consistent &= dims[p] == _uct_dims(H, p)
    deg = H.is_z_in_degree() if consistent else None
    report = TubeReport(deg, H, dims, consistent, tuple(sorted(c.value for c in crit)))
    return report if detailed else deg


@dataclass(frozen=True)
class DifferenceReport:
    c: float
    lhs: Mapping[int, Mapping[int, int]]
    rhs: Mapping[int, Mapping[int, int]]
    minus: Mapping[int, Mapping[int, int]]
    plus: Mapping[int, Mapping[int, int]]
    passed: Mapping[int, bool]

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_json(self) -> dict:
        def enc(d):
            return {str(p): {str(k): v for k, v in sorted(m.items())} for p, m in d.items()}
        return {"c": self.c, "lhs": enc(self.lhs), "rhs": enc(self.rhs),
                "minus": enc(self.minus), "plus": enc(self.plus),
                "passed": {str(p): v for p, v in self.passed.items()}}


def difference_homology_check(f: LinFn, c, primes: Sequence[int] = (2,), x=None,
                              points: int = 128, delta_points: int = 32) -> DifferenceReport:
    """Compare ``H(delta f <= -2c, delta f <= -inf)`` with the tensor-product prediction.

    With ``N = 1 + n`` the fiber dimension of ``f``, the prediction over ``F_p`` is
    ``dim H_k = sum_{i + N - j = k} dim H_i(f <= 0, f <= -inf) dim H_j(f <= +inf, f <= 0)``.
    """
    c = float(as_fraction(c))
    if c <= 0:
        raise InputError("c must be positive")
    pt = _as_base_point(f.base_vars, x)
    crit = critical_points(f, pt)
    for cp in crit:
        if not (-2 * c < cp.value < -c or c < cp.value < 2 * c):
            raise CriticalValueOutOfBand(f"critical value {cp.value:.6g} outside the band")
    N = 1 + f.n
    lhs, rhs, minus, plus, passed = {}, {}, {}, {}, {}
    top = 2 * c + 1.0
    for p in primes:
        if not crit:
            lhs[p], rhs[p], minus[p], plus[p] = {}, {}, {}, {}
            passed[p] = True
            continue
        Hm = sublevel_homology(f, pt, 0.0, None, p, points, crit=crit)
        Hp = sublevel_homology(f, pt, top, 0.0, p, points, crit=crit)
        Hd = delta_sublevel_homology(f, pt, -2 * c, None, p, delta_points, crit=crit)
        dm = {k: g.free for k, g in Hm.degrees}
        dp = {k: g.free for k, g in Hp.degrees}
        pred: dict[int, int] = {}
        for i, a in dm.items():
            for j, b in dp.items():
                pred[i + N - j] = pred.get(i + N - j, 0) + a * b
        got = {k: g.free for k, g in Hd.degrees}
        lhs[p], rhs[p], minus[p], plus[p] = got, pred, dm, dp
        passed[p] = got == pred
    return DifferenceReport(c, lhs, rhs, minus, plus, passed)
