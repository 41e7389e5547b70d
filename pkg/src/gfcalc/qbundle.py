"""Directed covers, quadratic-form cocycles and twisted generating functions.

The base is a finite simplicial complex whose points are modelled by its open
cells: a region is an up-closed set of simplices (an open set), intersections
are set intersections, and connected components are taken with respect to the
face relation.  Chart models of the circle and the interval are cycles and
paths with vertex coordinates.

A :class:`QCocycle` assigns to each overlapping pair ``i < j`` one
:class:`~gfcalc.quadform.QuadForm` per connected component of ``U_ij``.  The
operations here verify the cocycle law, pull back along refinements, well-order
and reorder the index set, untwist by downward induction, evaluate the
signature (Maslov) class on loops, and assemble the critical sets of a
:class:`TwistedGF`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import (ExtensionObstruction, GluingMismatch, HomotopyNotCocycle, InputError,
                     InvariantViolation, NotARefinement, OddGap, OrderObstruction, TooCoarse)
from .genfun import (CritPoint, LinFn, critical_points, oplus_b, permute_fiber, rename_fiber,
                     _eval_at)
from .quadform import (QuadForm, diagonal, direct_sum, homotopy_to_hyperbolic, hyperbolic,
                       invariants, negate, permute, unit)

Cell = tuple[int, ...]
Index = str


# ---------------------------------------------------------------------------
# bases


def _closure(simplices: Iterable[Sequence[int]]) -> frozenset[Cell]:
    out: set[Cell] = set()
    for s in simplices:
        s = tuple(sorted(int(v) for v in s))
        if len(set(s)) != len(s) or not s:
            raise InputError(f"bad simplex {s!r}")
        for r in range(1, len(s) + 1):
            out.update(itertools.combinations(s, r))
    return frozenset(out)


def _faces(c: Cell) -> list[Cell]:
    return [f for r in range(1, len(c)) for f in itertools.combinations(c, r)]


@dataclass(frozen=True)
class SimplicialBase:
    """A finite simplicial complex with optional vertex coordinates.

    ``kind`` is ``"circle"``, ``"interval"`` or ``"complex"``.  For circles
    ``period`` makes coordinates periodic.  ``cycles`` lists oriented vertex
    loops used as generators when pairing with the signature class.
    """

    simplices: frozenset[Cell]
    coords: Mapping[int, tuple[float, ...]] | None = None
    vars: tuple[str, ...] = ()
    kind: str = "complex"
    period: float | None = None
    cycles: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "simplices", _closure(self.simplices))
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "cycles", tuple(tuple(c) for c in self.cycles))
        if self.coords is not None:
            coords = {int(k): tuple(float(x) for x in v) for k, v in self.coords.items()}
            if set(coords) != set(self.vertices) or \
                    any(len(v) != len(self.vars) for v in coords.values()):
                raise InputError("coordinates must be given for every vertex and variable")
            object.__setattr__(self, "coords", coords)
        for loop in self.cycles:
            for a, b in zip(loop, loop[1:] + loop[:1]):
                if tuple(sorted((a, b))) not in self.simplices:
                    raise InputError(f"cycle {loop!r} uses a missing edge ({a}, {b})")

    @property
    def vertices(self) -> list[int]:
        return sorted(c[0] for c in self.simplices if len(c) == 1)

    @property
    def dim(self) -> int:
        return max(len(c) for c in self.simplices) - 1

    def cells(self) -> list[Cell]:
        return sorted(self.simplices, key=lambda c: (len(c), c))

    def star(self, cell: Cell) -> frozenset[Cell]:
        """Open star: the simplices having ``cell`` as a face."""
        s = set(cell)
        return frozenset(c for c in self.simplices if s <= set(c))

    def star_of_vertices(self, vertices: Iterable[int]) -> frozenset[Cell]:
        vs = set(int(v) for v in vertices)
        return frozenset(c for c in self.simplices if vs & set(c))

    def point(self, cell: Cell) -> dict[str, float]:
        """Barycentre of ``cell`` as a base point (periodic coordinates are unwrapped)."""
        if self.coords is None:
            return {}
        pts = np.array([self.coords[v] for v in cell], dtype=float)
        if self.period:
            ref = pts[0]
            pts = ref + (pts - ref + self.period / 2) % self.period - self.period / 2
        bary = pts.mean(axis=0)
        if self.period:
            bary = bary % self.period
        return {name: float(x) for name, x in zip(self.vars, bary)}

    def base_descriptor(self) -> dict:
        """Base description for :class:`~gfcalc.genfun.LinFn` objects over this complex."""
        if not self.vars:
            return {"type": "point"}
        return {"type": "samples", "vars": list(self.vars),
                "points": [[self.point(c)[v] for v in self.vars] for c in self.cells()]}

    def generator_cycles(self) -> tuple[tuple[int, ...], ...]:
        """Declared loops, or the fundamental cycles of a BFS spanning tree."""
        if self.cycles:
            return self.cycles
        adj: dict[int, list[int]] = {v: [] for v in self.vertices}
        edges = sorted(c for c in self.simplices if len(c) == 2)
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        parent: dict[int, int | None] = {}
        tree: set[Cell] = set()
        for root in self.vertices:
            if root in parent:
                continue
            parent[root] = None
            queue = [root]
            while queue:
                u = queue.pop(0)
                for v in sorted(adj[u]):
                    if v not in parent:
                        parent[v] = u
                        tree.add(tuple(sorted((u, v))))
                        queue.append(v)

        def path(v):
            out = [v]
            while parent[out[-1]] is not None:
                out.append(parent[out[-1]])
            return out

        loops = []
        for a, b in edges:
            if (a, b) in tree:
                continue
            pa, pb = path(a), path(b)
            common = set(pa) & set(pb)
            ia = next(k for k, v in enumerate(pa) if v in common)
            ib = pb.index(pa[ia])
            loops.append(_loop(pa[:ia + 1], pb[:ib + 1]))
        return tuple(loops)

    def to_json(self) -> dict:
        out = {"kind": self.kind,
               "simplices": [list(c) for c in sorted(self.simplices, key=lambda c: (len(c), c))
                             if not any(set(c) < set(d) for d in self.simplices)]}
        if self.coords is not None:
            out["coords"] = {str(k): list(v) for k, v in sorted(self.coords.items())}
            out["vars"] = list(self.vars)
        if self.period:
            out["period"] = self.period
        if self.cycles:
            out["cycles"] = [list(c) for c in self.cycles]
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "SimplicialBase":
        try:
            kind = data.get("type", data.get("kind", "complex"))
            if kind == "circle" and "simplices" not in data:
                return circle_base(int(data["vertices"]), float(data.get("period", 1.0)),
                                   data.get("var", "x"))
            if kind == "interval" and "simplices" not in data:
                lo, hi = data.get("range", (0.0, 1.0))
                return interval_base(int(data["vertices"]), float(lo), float(hi),
                                     data.get("var", "x"))
            coords = data.get("coords")
            return cls(_closure(data["simplices"]),
                       None if coords is None else {int(k): tuple(v) for k, v in coords.items()},
                       tuple(data.get("vars", ())), kind, data.get("period"),
                       tuple(tuple(c) for c in data.get("cycles", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad base JSON: {exc}") from exc


def _loop(pa: list[int], pb: list[int]) -> tuple[int, ...]:
    """Loop ``a -> ... -> lca -> ... -> b`` closed by the edge ``(b, a)``."""
    return tuple(pa + pb[:-1][::-1])


def circle_base(k: int, period: float = 1.0, var: str = "x") -> SimplicialBase:
    """The circle as a ``k``-cycle (``k >= 3``) with vertex ``j`` at ``j * period / k``."""
    if k < 3:
        raise InputError("a simplicial circle needs at least three vertices")
    edges = [(j, (j + 1) % k) for j in range(k)]
    coords = {j: (j * period / k,) for j in range(k)}
    return SimplicialBase(_closure(edges), coords, (var,), "circle", period,
                          (tuple(range(k)),))


def interval_base(k: int, lo: float = 0.0, hi: float = 1.0, var: str = "x") -> SimplicialBase:
    """``[lo, hi]`` as a path with ``k >= 2`` vertices."""
    if k < 2:
        raise InputError("an interval needs at least two vertices")
    coords = {j: (lo + (hi - lo) * j / (k - 1),) for j in range(k)}
    return SimplicialBase(_closure([(j, j + 1) for j in range(k - 1)]), coords, (var,),
                          "interval")


def barycentric_subdivision(base: SimplicialBase) -> tuple[SimplicialBase, dict[Cell, int],
                                                            dict[Cell, Cell]]:
    """Barycentric subdivision.

    Returns the subdivided complex, the vertex id of each original simplex
    (ids follow the order ``(dimension, vertex tuple)``), and the map sending a
    chain to the top simplex of the chain.
    """
    cells = base.cells()
    ident = {c: k for k, c in enumerate(cells)}
    chains = []
    maximal = [c for c in cells if not any(set(c) < set(d) for d in base.simplices)]
    for top in maximal:
        for perm in itertools.permutations(top):
            chain = tuple(ident[tuple(sorted(perm[:r]))] for r in range(1, len(top) + 1))
            chains.append(chain)
    coords = None
    if base.coords is not None:
        coords = {ident[c]: tuple(base.point(c)[v] for v in base.vars) for c in cells}
    cycles = []
    for loop in base.cycles:
        new = []
        for a, b in zip(loop, loop[1:] + loop[:1]):
            new += [ident[(a,)], ident[tuple(sorted((a, b)))]]
        cycles.append(tuple(new))
    sd = SimplicialBase(_closure(chains), coords, base.vars, base.kind, base.period,
                        tuple(cycles))
    cell_map = {chain: cells[max(chain)] for chain in sd.simplices}
    return sd, ident, cell_map


# ---------------------------------------------------------------------------
# directed covers


def _components(cells: frozenset[Cell]) -> list[frozenset[Cell]]:
    parent = {c: c for c in cells}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for c in cells:
        for f in _faces(c):
            if f in parent:
                ra, rb = find(c), find(f)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[Cell, set[Cell]] = {}
    for c in cells:
        groups.setdefault(find(c), set()).add(c)
    return sorted((frozenset(g) for g in groups.values()), key=lambda g: min(g))


class DirectedCover:
    """An open cover of a simplicial base indexed by a partially ordered set.

    ``order`` is either a sequence of indices (a total order) or a collection
    of pairs ``(i, j)`` meaning ``i < j``; the transitive closure is taken.
    The indices containing any given cell must be totally ordered.
    """

    def __init__(self, base: SimplicialBase, regions: Mapping[Index, Iterable[Sequence[int]]],
                 order: Sequence[Index] | Iterable[tuple[Index, Index]]):
        self.base = base
        self.regions: dict[Index, frozenset[Cell]] = {
            str(i): frozenset(tuple(sorted(int(v) for v in c)) for c in cells)
            for i, cells in regions.items()}
        names = list(self.regions)
        order = list(order)
        if order and all(isinstance(o, str) for o in order):
            if sorted(order) != sorted(names):
                raise InputError("total order must list every index once")
            pairs = {(order[a], order[b]) for a in range(len(order))
                     for b in range(a + 1, len(order))}
        else:
            pairs = {(str(a), str(b)) for a, b in order}
        for a, b in pairs:
            if a not in self.regions or b not in self.regions:
                raise InputError(f"order mentions unknown index in ({a}, {b})")
        less = set(pairs)
        changed = True
        while changed:
            changed = False
            for (a, b), (c, d) in itertools.product(list(less), list(less)):
                if b == c and (a, d) not in less:
                    less.add((a, d))
                    changed = True
        if any(a == b for a, b in less):
            raise InputError("order has a cycle")
        self._less = frozenset(less)
        self.indices: tuple[Index, ...] = self._linear_extension(names)
        self._pos = {i: k for k, i in enumerate(self.indices)}
        self._cache: dict = {}
        self._validate()

    def _linear_extension(self, names: list[Index]) -> tuple[Index, ...]:
        remaining = list(names)
        out: list[Index] = []
        while remaining:
            for i in remaining:
                if not any((j, i) in self._less for j in remaining if j != i):
                    out.append(i)
                    remaining.remove(i)
                    break
        return tuple(out)

    def _validate(self) -> None:
        all_cells = self.base.simplices
        covered: set[Cell] = set()
        for i, cells in self.regions.items():
            if not cells:
                raise InputError(f"region {i} is empty")
            if not cells <= all_cells:
                raise InputError(f"region {i} has cells outside the base")
            for c in cells:
                if not self.base.star(c) <= cells:
                    raise InputError(f"region {i} is not open at cell {c}")
            covered |= cells
        if covered != all_cells:
            missing = min(all_cells - covered, key=lambda c: (len(c), c))
            raise InputError(f"regions do not cover cell {missing}")
        for c in all_cells:
            idx = self.containing(c)
            for a, b in itertools.combinations(idx, 2):
                if not (self.less(a, b) or self.less(b, a)):
                    raise InputError(f"indices {a} and {b} both contain {c} but are not comparable")

    # order -----------------------------------------------------------------
    def less(self, i: Index, j: Index) -> bool:
        return (i, j) in self._less

    def is_total(self) -> bool:
        return all(self.less(a, b) for a, b in itertools.combinations(self.indices, 2))

    def order_pairs(self) -> list[tuple[Index, Index]]:
        return sorted(self._less, key=lambda p: (self._pos[p[0]], self._pos[p[1]]))

    def position(self, i: Index) -> int:
        return self._pos[i]

    # intersections ---------------------------------------------------------
    def containing(self, cell: Cell) -> list[Index]:
        return [i for i in self.indices if cell in self.regions[i]]

    def top_index(self, cell: Cell) -> Index:
        """The largest index whose region contains ``cell``."""
        return self.containing(cell)[-1]

    def overlap(self, *idx: Index) -> frozenset[Cell]:
        key = ("overlap",) + tuple(sorted(idx))
        if key not in self._cache:
            cells = self.regions[idx[0]]
            for i in idx[1:]:
                cells = cells & self.regions[i]
            self._cache[key] = frozenset(cells)
        return self._cache[key]

    def components(self, *idx: Index) -> list[frozenset[Cell]]:
        key = ("components",) + tuple(sorted(idx))
        if key not in self._cache:
            self._cache[key] = _components(self.overlap(*idx))
        return self._cache[key]

    def component_of(self, idx: Sequence[Index], cell: Cell) -> int:
        for k, comp in enumerate(self.components(*idx)):
            if cell in comp:
                return k
        raise InputError(f"cell {cell} is not in the intersection of {list(idx)}")

    def pairs(self) -> list[tuple[Index, Index]]:
        """Comparable pairs ``i < j`` with non-empty overlap, in order."""
        return [(a, b) for a, b in self.order_pairs() if self.overlap(a, b)]

    def triples(self) -> list[tuple[Index, Index, Index]]:
        out = []
        for a, b, c in itertools.combinations(self.indices, 3):
            if self.less(a, b) and self.less(b, c) and self.overlap(a, b, c):
                out.append((a, b, c))
        return out

    def reordered(self, order: Sequence[Index]) -> "DirectedCover":
        return DirectedCover(self.base, self.regions, list(order))

    def to_json(self) -> dict:
        return {"base": self.base.to_json(),
                "order": [list(p) for p in self.order_pairs()],
                "regions": {i: [list(c) for c in sorted(self.regions[i], key=lambda c: (len(c), c))]
                            for i in self.indices}}

    @classmethod
    def from_json(cls, data: Mapping) -> "DirectedCover":
        base = SimplicialBase.from_json(data["base"])
        regions = {}
        for i, spec in data["regions"].items():
            if isinstance(spec, Mapping):
                cells = set()
                if "star" in spec:
                    cells |= base.star_of_vertices(spec["star"])
                for c in spec.get("cells", ()):
                    cells.add(tuple(sorted(c)))
                regions[i] = cells
            else:
                regions[i] = spec
        order = data.get("order", list(regions))
        if order and not isinstance(order[0], str):
            order = [tuple(p) for p in order]
        return cls(base, regions, order)


# ---------------------------------------------------------------------------
# cocycles


def signature(q: QuadForm) -> int:
    return invariants(q).signature if q.dim else 0


@dataclass(frozen=True)
class CocycleFailure:
    kind: str
    indices: tuple[Index, ...]
    component: Cell
    detail: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "indices": list(self.indices),
                "component": list(self.component), "detail": self.detail}


@dataclass
class CocycleReport:
    checked_pairs: int
    checked_triples: int
    failures: list[CocycleFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"ok": self.ok, "checked_pairs": self.checked_pairs,
                "checked_triples": self.checked_triples,
                "failures": [f.to_json() for f in self.failures]}


class QCocycle:
    """Dimensions ``n_i`` and componentwise transition forms ``q_ij`` for ``i < j``.

    ``q[(i, j)]`` is a single form (used on every component of ``U_ij``) or a
    sequence with one form per component, in the order of
    :meth:`DirectedCover.components`.  Pairs with ``n_j < n_i`` are kept
    without a form and reported by :func:`verify`.
    """

    def __init__(self, cover: DirectedCover, dims: Mapping[Index, int],
                 q: Mapping[tuple[Index, Index], QuadForm | Sequence[QuadForm]]):
        self.cover = cover
        self.dims = {str(i): int(d) for i, d in dims.items()}
        if set(self.dims) != set(cover.indices) or any(d < 0 for d in self.dims.values()):
            raise InputError("dims must give a non-negative integer for every index")
        self.q: dict[tuple[Index, Index], tuple[QuadForm, ...]] = {}
        given = {(str(a), str(b)): v for (a, b), v in q.items()}
        for a, b in cover.pairs():
            ncomp = len(cover.components(a, b))
            gap = self.dims[b] - self.dims[a]
            if (a, b) not in given:
                if gap == 0:
                    self.q[(a, b)] = (unit(),) * ncomp
                    continue
                if gap < 0:
                    continue
                raise InputError(f"missing transition form for ({a}, {b})")
            if gap < 0:
                raise InputError(f"({a}, {b}) overlap but n_{b} < n_{a}")
            val = given.pop((a, b))
            forms = (val,) * ncomp if isinstance(val, QuadForm) else tuple(val)
            if len(forms) != ncomp:
                raise InputError(f"({a}, {b}) needs {ncomp} forms, one per component")
            for f in forms:
                if f.dim != gap:
                    raise InputError(f"q_{a}{b} has dimension {f.dim}, expected {gap}")
            self.q[(a, b)] = forms
        for k in given:
            raise InputError(f"transition form given for {k}, which is not an overlapping pair")

    def form(self, i: Index, j: Index, cell: Cell) -> QuadForm:
        """``q_ij`` on the component containing ``cell`` (``unit`` when ``i == j``)."""
        if i == j:
            return unit()
        return self.q[(i, j)][self.cover.component_of((i, j), cell)]

    def is_well_ordered(self) -> bool:
        idx = self.cover.indices
        return self.cover.is_total() and all(
            self.dims[a] <= self.dims[b] for a, b in zip(idx, idx[1:]))

    def equals(self, other: "QCocycle") -> bool:
        return (self.cover.regions == other.cover.regions
                and self.cover.order_pairs() == other.cover.order_pairs()
                and self.dims == other.dims and self.q == other.q)

    def to_json(self) -> dict:
        out = self.cover.to_json()
        out["dims"] = dict(self.dims)
        out["q"] = {f"{a},{b}": [f.to_json() for f in forms] for (a, b), forms in self.q.items()}
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "QCocycle":
        cover = DirectedCover.from_json(data)
        q = {}
        for key, val in data.get("q", {}).items():
            a, b = (s.strip() for s in key.split(","))
            if isinstance(val, Mapping):
                q[(a, b)] = QuadForm.from_json(val)
            else:
                q[(a, b)] = [QuadForm.from_json(v) for v in val]
        return cls(cover, data["dims"], q)


def verify(c: QCocycle) -> CocycleReport:
    """Check dimensions and the cocycle law ``q_ij ⊕ q_jk = q_ik`` on every triple component."""
    cov = c.cover
    report = CocycleReport(len(cov.pairs()), 0)
    for a, b in cov.pairs():
        if (a, b) not in c.q:
            report.failures.append(CocycleFailure(
                "dims", (a, b), min(cov.overlap(a, b)),
                f"overlapping with n_{a} = {c.dims[a]} > n_{b} = {c.dims[b]}"))
    for a, b, d in cov.triples():
        report.checked_triples += 1
        if not all(p in c.q for p in ((a, b), (b, d), (a, d))):
            continue
        for comp in cov.components(a, b, d):
            cell = min(comp, key=lambda x: (len(x), x))
            lhs = direct_sum(c.form(a, b, cell), c.form(b, d, cell))
            rhs = c.form(a, d, cell)
            if lhs != rhs:
                report.failures.append(CocycleFailure(
                    "cocycle", (a, b, d), cell, f"q_{a}{b} ⊕ q_{b}{d} != q_{a}{d}"))
    return report


# ---------------------------------------------------------------------------
# refinement and pullback


def refine(c: QCocycle, cover: DirectedCover, sigma: Mapping[Index, Index],
           cell_map: Mapping[Cell, Cell] | Callable[[Cell], Cell] | None = None) -> QCocycle:
    """Pull ``c`` back along a refinement ``sigma: J -> I``.

    ``cell_map`` sends cells of the new base to cells of the old base (the
    identity when both covers share a base).  Requires ``V_j`` to map into
    ``U_sigma(j)`` and ``sigma`` to be non-decreasing on the indices containing
    each cell.
    """
    if cell_map is None:
        cmap = lambda x: x  # noqa: E731
    elif callable(cell_map):
        cmap = cell_map
    else:
        cmap = lambda x: cell_map[x]  # noqa: E731
    old = c.cover
    for j in cover.indices:
        if j not in sigma or sigma[j] not in old.regions:
            raise NotARefinement(f"sigma is undefined on {j}")
        for y in cover.regions[j]:
            if cmap(y) not in old.regions[sigma[j]]:
                raise NotARefinement(f"V_{j} is not contained in U_{sigma[j]} at {y}")
    for y in cover.base.simplices:
        idx = cover.containing(y)
        for a, b in itertools.combinations(idx, 2):
            ia, ib = sigma[a], sigma[b]
            if ia != ib and not old.less(ia, ib):
                raise NotARefinement(f"sigma decreases on {a} < {b} at {y}")
    dims = {j: c.dims[sigma[j]] for j in cover.indices}
    q = {}
    for a, b in cover.pairs():
        ia, ib = sigma[a], sigma[b]
        forms = []
        for comp in cover.components(a, b):
            y = min(comp, key=lambda x: (len(x), x))
            forms.append(unit() if ia == ib else c.form(ia, ib, cmap(y)))
        q[(a, b)] = forms
    return QCocycle(cover, dims, q)


def simplicial_image(vertex_map: Mapping[int, int], cell: Cell) -> Cell:
    return tuple(sorted({vertex_map[v] for v in cell}))


def pullback(c: QCocycle, base: SimplicialBase, vertex_map: Mapping[int, int]) -> QCocycle:
    """Pull back along a simplicial map given on vertices; empty preimages are dropped."""
    old = c.cover
    for cell in base.simplices:
        if simplicial_image(vertex_map, cell) not in old.base.simplices:
            raise InputError(f"vertex map does not send {cell} to a simplex")
    regions = {}
    for i in old.indices:
        pre = frozenset(y for y in base.simplices
                        if simplicial_image(vertex_map, y) in old.regions[i])
        if pre:
            regions[i] = pre
    order = [(a, b) for a, b in old.order_pairs() if a in regions and b in regions]
    if not order:
        order = [i for i in old.indices if i in regions]
    cover = DirectedCover(base, regions, order)
    return refine(c, cover, {i: i for i in regions},
                  lambda y: simplicial_image(vertex_map, y))


def well_order(c: QCocycle) -> QCocycle:
    """Re-index by ``(n_i, position)`` so that the order is total with monotone dims.

    Raises :class:`OrderObstruction` when overlapping ``i < j`` have ``n_i > n_j``.
    """
    cov = c.cover
    for a, b in cov.order_pairs():
        if cov.overlap(a, b) and c.dims[a] > c.dims[b]:
            raise OrderObstruction(f"U_{a} and U_{b} overlap with {a} < {b} but "
                                   f"n_{a} = {c.dims[a]} > n_{b} = {c.dims[b]}")
    order = sorted(cov.indices, key=lambda i: (c.dims[i], cov.position(i)))
    return QCocycle(cov.reordered(order), c.dims, c.q)


def total_order_refinement(c: QCocycle) -> tuple[QCocycle, dict[Index, Index], SimplicialBase]:
    """Refine by the barycentric stars of the simplices of the base.

    The new index ``j`` (named after the simplex) is sent to ``r(j)``, the
    largest index whose region contains the open star of ``j``.  Returns the
    refined cocycle, the map ``r`` and the subdivided base.
    """
    base = c.cover.base
    sd, ident, cell_map = barycentric_subdivision(base)
    names = {ident[s]: _simplex_name(s) for s in ident}
    regions = {names[k]: sd.star((k,)) for k in sorted(names)}
    r = {}
    for s, k in ident.items():
        st = base.star(s)
        I = [i for i in c.cover.indices if st <= c.cover.regions[i]]
        if not I:
            raise TooCoarse(f"the star of {s} lies in no single region; subdivide the base")
        r[names[k]] = I[-1]
    cover = DirectedCover(sd, regions, [names[k] for k in sorted(names)])
    return refine(c, cover, r, cell_map), r, sd


def _simplex_name(s: Cell) -> str:
    return "s" + "_".join(str(v) for v in s)


# ---------------------------------------------------------------------------
# signature class


@dataclass
class MaslovClass:
    """Pairings of the signature cocycle with the generating loops of the base."""

    cycles: tuple[tuple[int, ...], ...]
    pairings: tuple[int, ...]
    cochain: dict[tuple[Index, Index], tuple[int, ...]]

    def to_json(self) -> dict:
        return {"cycles": [list(c) for c in self.cycles], "pairings": list(self.pairings),
                "cochain": {f"{a},{b}": list(v) for (a, b), v in self.cochain.items()}}


def transition_signature(c: QCocycle, i: Index, j: Index, cell: Cell) -> int:
    """``sgn q_ij`` at ``cell``, extended by ``sgn q_ji = -sgn q_ij``."""
    if i == j:
        return 0
    if c.cover.less(i, j):
        return signature(c.form(i, j, cell))
    return -signature(c.form(j, i, cell))


def pair_loop(c: QCocycle, loop: Sequence[int]) -> int:
    """Evaluate the signature cocycle on an oriented vertex loop.

    The loop is walked as the cell sequence ``v0, [v0 v1], v1, ...``; each step
    from a cell to a neighbouring cell contributes the signature of the
    transition between their top indices, taken on the shared cell.
    """
    cov = c.cover
    seq: list[Cell] = []
    loop = list(loop)
    for a, b in zip(loop, loop[1:] + loop[:1]):
        seq += [(a,), tuple(sorted((a, b)))]
    seq.append((loop[0],))
    total = 0
    for x, y in zip(seq, seq[1:]):
        shared = x if len(x) > len(y) else y
        total += transition_signature(c, cov.top_index(x), cov.top_index(y), shared)
    return total


def maslov_class(c: QCocycle) -> MaslovClass:
    cycles = c.cover.base.generator_cycles()
    cochain = {k: tuple(signature(f) for f in forms) for k, forms in c.q.items()}
    return MaslovClass(cycles, tuple(pair_loop(c, lp) for lp in cycles), cochain)


# ---------------------------------------------------------------------------
# untwisting


def _is_difference_form(q: QuadForm) -> bool:
    n = q.dim
    if n % 2:
        return False
    m = q.mat
    for r in range(0, n, 2):
        for s in range(0, n, 2):
            if m[r][s] != -m[r + 1][s + 1] or m[r][s + 1] or m[r + 1][s]:
                return False
    return True


def default_homotopy(q: QuadForm, t) -> QuadForm:
    """The circular interpolation from ``q`` to the hyperbolic form, when ``q`` is
    hyperbolic or of the interleaved form ``a ⊕ (-a)``."""
    k = q.dim // 2
    if q.dim % 2:
        raise OddGap(f"form of odd dimension {q.dim} cannot be joined to a hyperbolic form")
    h = hyperbolic(k)
    if q == h:
        return h
    if _is_difference_form(q):
        return homotopy_to_hyperbolic(q, h, t)
    raise InputError("no homotopy supplied and the form is not of the form a ⊕ (-a)")


Homotopy = Callable[[Index, Index, int, Fraction], QuadForm]


@dataclass
class Untwisting:
    """Forms ``Q_i`` per cell of ``U_i`` with ``q_ij ⊕ Q_j = Q_i`` on overlaps."""

    Q: dict[Index, dict[Cell, QuadForm]]
    samples: tuple[Fraction, ...]

    def to_json(self) -> dict:
        out = {}
        for i, per_cell in self.Q.items():
            groups: dict[QuadForm, list] = {}
            for cell in sorted(per_cell, key=lambda x: (len(x), x)):
                groups.setdefault(per_cell[cell], []).append(list(cell))
            out[i] = [{"form": f.to_json(), "cells": cells} for f, cells in groups.items()]
        return {"Q": out, "t_samples": [str(t) for t in self.samples]}


def _descend(c: QCocycle, forms: Callable[[Index, Index, Cell], QuadForm]) -> dict:
    cov = c.cover
    order = cov.indices
    top = order[-1]
    Q: dict[Index, dict[Cell, QuadForm]] = {top: {cell: unit() for cell in cov.regions[top]}}
    for pos in range(len(order) - 2, -1, -1):
        i = order[pos]
        Q[i] = {}
        gap = c.dims[top] - c.dims[i]
        for cell in cov.regions[i]:
            vals = {direct_sum(forms(i, j, cell), Q[j][cell])
                    for j in order[pos + 1:] if cell in cov.regions[j]}
            if len(vals) > 1:
                raise InvariantViolation(f"q_{i}j ⊕ Q_j disagree at {cell}")
            Q[i][cell] = vals.pop() if vals else hyperbolic(gap // 2)
    return Q


def untwist(c: QCocycle, homotopies: Homotopy | None = None,
            samples: Sequence = (0, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), 1)
            ) -> Untwisting:
    """Forms ``Q_i`` with ``q_ij ⊕ Q_j = Q_i``, by downward induction from ``Q_top = 0``.

    ``homotopies(i, j, component, t)`` gives ``q_ij^t`` with ``q_ij^0 = q_ij``
    and ``q_ij^1`` hyperbolic; by default the circular interpolation of
    :func:`default_homotopy` is used.  The homotopy is checked to be a cocycle
    at every sampled ``t``.
    """
    if not c.is_well_ordered():
        raise InputError("untwist needs a well-ordered cocycle")
    dims = list(c.dims.values())
    for a, b in itertools.combinations(dims, 2):
        if (a - b) % 2:
            raise OddGap(f"dimension gap {abs(a - b)} is odd")
    cov = c.cover
    if homotopies is None:
        homotopies = lambda i, j, k, t: default_homotopy(c.q[(i, j)][k], t)  # noqa: E731
    ts = tuple(Fraction(t) for t in samples)
    for t in ts:
        def at(i, j, cell, t=t):
            if i == j:
                return unit()
            return homotopies(i, j, cov.component_of((i, j), cell), t)

        for (a, b), forms in c.q.items():
            for k, q0 in enumerate(forms):
                qt = homotopies(a, b, k, t)
                if qt.dim != q0.dim:
                    raise HomotopyNotCocycle(f"q_{a}{b}^t changes dimension at t = {t}")
                if t == 0 and qt != q0:
                    raise HomotopyNotCocycle(f"q_{a}{b}^0 differs from q_{a}{b}")
                if t == 1 and qt != hyperbolic(q0.dim // 2):
                    raise HomotopyNotCocycle(f"q_{a}{b}^1 is not hyperbolic")
        for a, b, d in cov.triples():
            for comp in cov.components(a, b, d):
                cell = min(comp, key=lambda x: (len(x), x))
                if direct_sum(at(a, b, cell), at(b, d, cell)) != at(a, d, cell):
                    raise HomotopyNotCocycle(f"cocycle law fails for ({a}, {b}, {d}) at t = {t}")
    Q = _descend(c, lambda i, j, cell: c.form(i, j, cell))
    return Untwisting(Q, ts)


def check_untwisting(c: QCocycle, u: Untwisting) -> bool:
    """Exact check of ``q_ij ⊕ Q_j = Q_i`` on every overlap cell."""
    cov = c.cover
    for a, b in cov.pairs():
        for cell in cov.overlap(a, b):
            if direct_sum(c.form(a, b, cell), u.Q[b][cell]) != u.Q[a][cell]:
                return False
    return True


# ---------------------------------------------------------------------------
# twisted generating functions


@dataclass
class GluingReport:
    checked: int
    max_error: float
    failures: list[tuple[Index, Index, Cell, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"ok": self.ok, "checked": self.checked, "max_error": self.max_error,
                "failures": [{"pair": [a, b], "cell": list(cell), "error": e}
                             for a, b, cell, e in self.failures]}


def _sample_cells(cells: Iterable[Cell], count: int) -> list[Cell]:
    cells = sorted(cells, key=lambda x: (len(x), x))
    if len(cells) <= count:
        return cells
    picks = np.linspace(0, len(cells) - 1, count).round().astype(int)
    return [cells[k] for k in sorted(set(picks.tolist()))]


class TwistedGF:
    """Functions ``f_i`` over the regions of a cocycle, glued by ``f_i ⊕_b q_ij = f_j``.

    Fiber coordinates are identified positionally: the first ``n_i``
    coordinates of ``f_j`` are those of ``f_i``.
    """

    def __init__(self, cocycle: QCocycle, functions: Mapping[Index, LinFn], b=3):
        self.cocycle = cocycle
        self.functions = {str(i): f for i, f in functions.items()}
        self.b = b
        if set(self.functions) != set(cocycle.cover.indices):
            raise InputError("a function is needed for every index")
        for i, f in self.functions.items():
            if f.n != cocycle.dims[i]:
                raise InputError(f"f_{i} has {f.n} fiber coordinates, expected {cocycle.dims[i]}")
            if tuple(f.base_vars) != tuple(cocycle.cover.base.vars):
                raise InputError(f"f_{i} is not a function over the base variables")

    def glued(self, i: Index, j: Index, q: QuadForm) -> LinFn:
        """``f_i ⊕_b q`` written in the fiber coordinates of ``f_j``."""
        fi, fj = self.functions[i], self.functions[j]
        ni = fi.n
        return oplus_b(rename_fiber(fi, fj.fiber[:ni]), q, self.b, names=fj.fiber[ni:])

    def check_gluing(self, cells_per_component: int = 3, points: int = 64, seed: int = 0,
                     tol: float = 1e-10) -> GluingReport:
        """Compare ``f_i ⊕_b q_ij`` with ``f_j`` at random fiber points over sampled cells."""
        c = self.cocycle
        cov = c.cover
        rng = np.random.default_rng(seed)
        report = GluingReport(0, 0.0)
        for a, bidx in cov.pairs():
            fj = self.functions[bidx]
            for k, comp in enumerate(cov.components(a, bidx)):
                g = self.glued(a, bidx, c.q[(a, bidx)][k])
                lo = np.array([fj.support[n][0] for n in fj.coords]) * 1.25 - 1.0
                hi = np.array([fj.support[n][1] for n in fj.coords]) * 1.25 + 1.0
                pts = lo + (hi - lo) * rng.random((points, len(fj.coords)))
                for cell in _sample_cells(comp, cells_per_component):
                    x = cov.base.point(cell)
                    v1 = _eval_at(g.expr(), g, x, pts)
                    v2 = _eval_at(fj.expr(), fj, x, pts)
                    err = float(np.max(np.abs(v1 - v2) / (1.0 + np.abs(v2))))
                    report.checked += 1
                    report.max_error = max(report.max_error, err)
                    if err > tol:
                        report.failures.append((a, bidx, cell, err))
        return report


# ---------------------------------------------------------------------------
# reordering


def _delta_form(c: QCocycle, i: Index, j: Index) -> QuadForm:
    """The stabilizing form ``q_ij ⊕ -q_ij``, or a constant split form when ``U_ij`` is empty."""
    d = c.dims[j] - c.dims[i]
    forms = c.q.get((i, j))
    if not forms:
        return diagonal(*([1] * d + [-1] * d))
    if len(set(forms)) > 1:
        raise ExtensionObstruction(
            f"q_{i}{j} differs between components of U_{i}{j}; no constant extension of "
            f"q ⊕ -q exists on this base")
    return direct_sum(forms[0], negate(forms[0]))


def _swap_step(c: QCocycle, pos: int, functions: dict[Index, LinFn] | None, b
               ) -> tuple[QCocycle, dict[Index, LinFn] | None, QuadForm]:
    cov = c.cover
    order = list(cov.indices)
    i, i1 = order[pos], order[pos + 1]
    dq = _delta_form(c, i, i1)
    m = dq.dim
    new_order = order[:pos] + [i1, i] + order[pos + 2:]
    before = set(order[:pos])
    grown = {i} | set(order[pos + 2:])
    dims = {k: c.dims[k] + (m if k in grown else 0) for k in order}
    new_cover = cov.reordered(new_order)
    q: dict[tuple[Index, Index], list[QuadForm]] = {}
    for k, l in new_cover.pairs():
        old = c.q.get((k, l)) or c.q.get((l, k))
        if (k, l) == (i1, i):
            q[(k, l)] = [negate(f) for f in c.q[(i, i1)]]
        elif k == i1 and l in grown:
            q[(k, l)] = [direct_sum(negate(dq), f) for f in c.q[(k, l)]]
        elif k in before and l in grown:
            nki = c.dims[i] - c.dims[k]
            nil = c.dims[l] - c.dims[i]
            sigma = (list(range(nki)) + list(range(nki + m, nki + m + nil))
                     + list(range(nki, nki + m)))
            q[(k, l)] = [permute(direct_sum(f, dq), sigma) for f in c.q[(k, l)]]
        else:
            q[(k, l)] = list(old)
    new_c = QCocycle(new_cover, dims, q)
    new_f = None
    if functions is not None:
        new_f = {}
        ni = c.dims[i]
        for k in order:
            f = functions[k]
            if k in grown and m:
                g = oplus_b(f, dq, b)
                nk = f.n
                perm = list(range(ni)) + list(range(nk, nk + m)) + list(range(ni, nk))
                f = permute_fiber(g, perm)
            new_f[k] = f
    return new_c, new_f, dq


def _transpositions(current: Sequence[Index], target: Sequence[Index]) -> list[int]:
    cur = list(current)
    rank = {k: p for p, k in enumerate(target)}
    steps = []
    for _ in range(len(cur)):
        for p in range(len(cur) - 1):
            if rank[cur[p]] > rank[cur[p + 1]]:
                cur[p], cur[p + 1] = cur[p + 1], cur[p]
                steps.append(p)
    return steps


def reorder_cocycle(c: QCocycle, new_order: Sequence[Index]) -> QCocycle:
    """Transport a well-ordered cocycle to another total order by adjacent swaps."""
    return _reorder(c, None, new_order, 3)[0]


def reorder(t: TwistedGF, new_order: Sequence[Index]) -> TwistedGF:
    """Transport a well-ordered twisted generating function to another total order.

    Each adjacent swap ``(i, i+1)`` stabilizes ``f_i`` and every later
    ``f_k`` by ``δq = q_{i,i+1} ⊕ -q_{i,i+1}``, inserting the new coordinates
    after the first ``n_i``, and rewrites the transition forms accordingly.
    Critical points keep their values since stabilization adds them at zero.
    """
    c, f = _reorder(t.cocycle, dict(t.functions), new_order, t.b)
    return TwistedGF(c, f, t.b)


def _reorder(c: QCocycle, functions, new_order, b):
    if sorted(new_order) != sorted(c.cover.indices):
        raise InputError("new order must list every index once")
    if not c.is_well_ordered():
        raise InputError("reorder needs a well-ordered input")
    for p in _transpositions(c.cover.indices, list(new_order)):
        c, functions, _ = _swap_step(c, p, functions, b)
    return c, functions


# ---------------------------------------------------------------------------
# assembling the critical sets


@dataclass
class SigmaReport:
    """Critical points per region and their identification over overlaps."""

    regions: dict[Index, list[tuple[Cell, list[CritPoint]]]]
    matches: list[dict]
    legendrian: list[dict]

    def to_json(self) -> dict:
        return {
            "regions": {i: [{"cell": list(cell), "critical": [p.to_json() for p in pts]}
                            for cell, pts in rows] for i, rows in self.regions.items()},
            "matches": self.matches,
            "legendrian": self.legendrian,
        }


def critical_values(t: TwistedGF, cells_per_region: int = 3) -> dict[Index, list[list[float]]]:
    """Sorted critical values of each ``f_i`` over sampled cells of its region."""
    cov = t.cocycle.cover
    out = {}
    for i in cov.indices:
        out[i] = [sorted(p.value for p in critical_points(t.functions[i], cov.base.point(cell)))
                  for cell in _sample_cells(cov.regions[i], cells_per_region)]
    return out


def assemble_sigma(t: TwistedGF, cells_per_region: int = 3, tol: float = 1e-7) -> SigmaReport:
    """Compute critical sets per region and check that over ``U_ij`` those of
    ``f_j`` are those of ``f_i`` padded by zeros.

    Raises :class:`GluingMismatch` naming the first offending overlap.
    """
    cov = t.cocycle.cover
    crit: dict[tuple[Index, Cell], list[CritPoint]] = {}

    def crit_at(i, cell):
        if (i, cell) not in crit:
            crit[(i, cell)] = critical_points(t.functions[i], cov.base.point(cell))
        return crit[(i, cell)]

    regions = {i: [(cell, crit_at(i, cell))
                   for cell in _sample_cells(cov.regions[i], cells_per_region)]
               for i in cov.indices}
    matches = []
    for a, b in cov.pairs():
        for comp in cov.components(a, b):
            for cell in _sample_cells(comp, cells_per_region):
                pa, pb = crit_at(a, cell), crit_at(b, cell)
                pad = t.functions[b].n - t.functions[a].n
                want = sorted(tuple(p.location) + (0.0,) * pad for p in pa)
                got = sorted(tuple(p.location) for p in pb)
                if len(want) != len(got) or any(
                        np.max(np.abs(np.subtract(u, v))) > tol for u, v in zip(want, got)):
                    raise GluingMismatch(
                        f"critical points of f_{b} over U_{a}{b} at {cell} are not those of "
                        f"f_{a} padded by zeros")
                matches.append({"pair": [a, b], "cell": list(cell), "count": len(pb)})
    legendrian = []
    for cell in _sample_cells(cov.base.simplices, max(cells_per_region * len(cov.indices), 1)):
        i = cov.top_index(cell)
        for p in crit_at(i, cell):
            legendrian.append({"region": i, "x": list(p.base_point),
                               "dfdx": list(p.base_derivative), "value": p.value})
    return SigmaReport(regions, matches, legendrian)


# ---------------------------------------------------------------------------
# scenario library


@dataclass
class Scenario:
    name: str
    cocycle: QCocycle
    functions: dict[Index, LinFn] | None = None
    pairings: tuple[int, ...] | None = None
    verify_ok: bool = True
    b: float = 3.0

    def twisted(self) -> TwistedGF:
        if self.functions is None:
            raise InputError(f"scenario {self.name} has no functions")
        return TwistedGF(self.cocycle, self.functions, self.b)


def _region_by_vertices(base: SimplicialBase, lo: int, hi: int) -> frozenset[Cell]:
    return base.star_of_vertices(range(lo, hi + 1))


def _chain_functions(cocycle: QCocycle, seed: LinFn, chain: Sequence[QuadForm], b) -> dict:
    """``f_k = seed ⊕_b chain[0] ⊕_b ... ⊕_b chain[k-1]`` along the total order."""
    out = {}
    f = seed
    for k, i in enumerate(cocycle.cover.indices):
        if k:
            f = oplus_b(f, chain[k - 1], b)
        out[i] = f
    return out


def _seed_function(base: SimplicialBase, b) -> LinFn:
    w = ex.var("w")
    terms = [ex.mul(ex.const(Fraction(1, 10 * (k + 1))), ex.var(v))
             for k, v in enumerate(base.vars)]
    return LinFn(ex.add(*terms) if terms else ex.ZERO, ex.call("D", w) - w, (),
                 {"w": (-2.0, 2.0)}, ex.const(b), 1.0, base.base_descriptor())


def circle_arcs(q02: QuadForm) -> QCocycle:
    """Three vertex-star arcs on a 3-vertex circle with dims ``(0, 2, 2)``."""
    base = circle_base(3)
    regions = {str(k): base.star((k,)) for k in range(3)}
    cover = DirectedCover(base, regions, ["0", "1", "2"])
    return QCocycle(cover, {"0": 0, "1": 2, "2": 2},
                    {("0", "1"): hyperbolic(1), ("1", "2"): unit(), ("0", "2"): q02})


def interval_regions(corrupt: bool = False, b: float = 3.0) -> tuple[QCocycle, dict]:
    """Four overlapping regions on a 9-vertex interval with dims ``(0, 1, 1, 2)``."""
    base = interval_base(9)
    spans = [(0, 4), (1, 6), (3, 7), (6, 8)]
    regions = {str(k + 1): _region_by_vertices(base, lo, hi) for k, (lo, hi) in enumerate(spans)}
    cover = DirectedCover(base, regions, ["1", "2", "3", "4"])
    chain = [diagonal(-1), unit(), diagonal(1)]
    q = {("1", "2"): chain[0], ("2", "3"): chain[1], ("3", "4"): chain[2],
         ("1", "3"): diagonal(1) if corrupt else direct_sum(chain[0], chain[1]),
         ("2", "4"): direct_sum(chain[1], chain[2])}
    c = QCocycle(cover, {"1": 0, "2": 1, "3": 1, "4": 2}, q)
    return c, _chain_functions(c, _seed_function(base, b), chain, b)


def triangle_complex(three: bool = True, b: float = 3.0) -> tuple[QCocycle, dict]:
    """A filled triangle in the plane covered by vertex stars."""
    base = SimplicialBase(_closure([(0, 1, 2)]), {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (0.0, 1.0)},
                          ("x", "y"), "complex")
    if three:
        regions = {str(k): base.star((k,)) for k in range(3)}
        chain = [diagonal(1), diagonal(-1)]
        q = {("0", "1"): chain[0], ("1", "2"): chain[1], ("0", "2"): direct_sum(*chain)}
        dims = {"0": 0, "1": 1, "2": 2}
    else:
        regions = {"a": base.star_of_vertices((0, 1)), "b": base.star((2,))}
        chain = [hyperbolic(1)]
        q = {("a", "b"): chain[0]}
        dims = {"a": 0, "b": 2}
    cover = DirectedCover(base, regions, list(regions))
    c = QCocycle(cover, dims, q)
    return c, _chain_functions(c, _seed_function(base, b), chain, b)


def scenario_library() -> dict[str, Scenario]:
    """Six reference scenarios with their expected verification and pairings."""
    out = {}
    out["circle-3arc-trivial"] = Scenario("circle-3arc-trivial", circle_arcs(hyperbolic(1)),
                                          pairings=(0,))
    out["circle-3arc-maslov2"] = Scenario("circle-3arc-maslov2", circle_arcs(diagonal(-1, -1)),
                                          pairings=(2,))
    c, f = interval_regions()
    out["interval-4region"] = Scenario("interval-4region", c, f, pairings=())
    c, _ = interval_regions(corrupt=True)
    out["interval-4region-corrupt"] = Scenario("interval-4region-corrupt", c, pairings=(),
                                               verify_ok=False)
    c, f = triangle_complex(three=False)
    out["triangle-2stars"] = Scenario("triangle-2stars", c, f, pairings=())
    c, f = triangle_complex(three=True)
    out["triangle-3stars"] = Scenario("triangle-3stars", c, f, pairings=())
    return out
