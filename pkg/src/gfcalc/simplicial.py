"""Simplicial sets, bar constructions and Mayer-Vietoris blow-ups on finite data.

A :class:`SimplicialSet` stores its non-degenerate simplices with their faces;
a face may be degenerate, written formally as ``(key, s)`` with ``s`` a
non-decreasing surjection ``[m] -> [k]`` given as a tuple, meaning
``s^*(key)``.  Bar constructions ``B(F, Q)`` of finite monoids are generated
level by level from the face and degeneracy formulas.  Homology is that of
the normalized chain complex, truncated at a declared degree.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import InputError, InvariantViolation, NotAnAction, NotDirected
from .homalg import GradedAbGroup, SparseComplex
from .qbundle import DirectedCover, SimplicialBase, _closure

Key = Hashable
Formal = tuple[Key, tuple[int, ...]]


# ---------------------------------------------------------------------------
# simplicial sets


class SimplicialSet:
    """Non-degenerate simplices per degree with their (formal) faces.

    ``faces[x]`` lists the ``n + 1`` faces of an ``n``-simplex ``x``; each is a
    key (a non-degenerate simplex) or a pair ``(key, surjection)``.  An
    optional vertex order makes the set directed.
    """

    def __init__(self, simplices: Mapping[int, Sequence[Key]],
                 faces: Mapping[Key, Sequence[Key | Formal]] | None = None,
                 vertex_order: Iterable[tuple[Key, Key]] | None = None):
        self.levels: dict[int, list[Key]] = {int(n): list(xs) for n, xs in simplices.items()}
        self.dim_of: dict[Key, int] = {}
        for n, xs in self.levels.items():
            for x in xs:
                if x in self.dim_of:
                    raise InputError(f"simplex {x!r} listed twice")
                self.dim_of[x] = n
        faces = faces or {}
        self.faces: dict[Key, tuple[Formal, ...]] = {}
        for x, n in self.dim_of.items():
            if n == 0:
                self.faces[x] = ()
                continue
            fs = tuple(self._formal(f, n - 1) for f in faces.get(x, ()))
            if len(fs) != n + 1:
                raise InputError(f"simplex {x!r} of degree {n} needs {n + 1} faces")
            self.faces[x] = fs
        self.vertex_order = None if vertex_order is None else frozenset(vertex_order)

    def _formal(self, f, m: int) -> Formal:
        if isinstance(f, tuple) and len(f) == 2 and f[0] in self.dim_of and \
                isinstance(f[1], tuple) and f not in self.dim_of:
            key, s = f
        else:
            key, s = f, None
        if key not in self.dim_of:
            raise InputError(f"face {f!r} is not a stored simplex")
        k = self.dim_of[key]
        if s is None:
            s = tuple(range(k + 1))
        s = tuple(int(v) for v in s)
        if len(s) != m + 1 or sorted(set(s)) != list(range(k + 1)) or list(s) != sorted(s):
            raise InputError(f"bad degeneracy {s!r} for a face of degree {m}")
        return key, s

    @property
    def max_degree(self) -> int:
        return max(self.levels) if self.levels else -1

    def identity(self, x: Key) -> Formal:
        return x, tuple(range(self.dim_of[x] + 1))

    def face(self, value: Formal, i: int) -> Formal:
        """``d_i`` applied to the formal simplex ``s^*(key)``."""
        key, s = value
        m = len(s) - 1
        if not 0 <= i <= m or m == 0:
            raise InputError(f"face index {i} out of range for degree {m}")
        t = s[:i] + s[i + 1:]
        k = self.dim_of[key]
        if len(set(t)) == k + 1:
            return key, t
        j = next(v for v in range(k + 1) if v not in t)
        key2, s2 = self.faces[key][j]
        relabel = tuple(v if v < j else v - 1 for v in t)
        return key2, tuple(s2[v] for v in relabel)

    def degeneracy(self, value: Formal, i: int) -> Formal:
        key, s = value
        return key, s[:i + 1] + s[i:]

    def vertex(self, value: Formal, k: int) -> Key:
        while len(value[1]) > 1:
            m = len(value[1]) - 1
            if k < m:
                value = self.face(value, m)
            else:
                value = self.face(value, 0)
                k -= 1
        return value[0]

    def vertices(self, x: Key) -> tuple[Key, ...]:
        v = self.identity(x)
        return tuple(self.vertex(v, k) for k in range(self.dim_of[x] + 1))

    def check_identities(self) -> list[tuple[Key, int, int]]:
        """Violations of ``d_i d_j = d_{j-1} d_i`` (``i < j``) on stored simplices."""
        bad = []
        for x, n in self.dim_of.items():
            if n < 2:
                continue
            v = self.identity(x)
            for i, j in itertools.combinations(range(n + 1), 2):
                if self.face(self.face(v, j), i) != self.face(self.face(v, i), j - 1):
                    bad.append((x, i, j))
        return bad

    def is_directed(self) -> bool:
        """Vertex tuples strictly increasing and determining the simplex."""
        if self.vertex_order is None:
            return False
        seen = set()
        for x in self.dim_of:
            vs = self.vertices(x)
            if any((a, b) not in self.vertex_order for a, b in zip(vs, vs[1:])):
                return False
            if vs in seen:
                return False
            seen.add(vs)
        return True

    def normalized_faces(self, x: Key) -> list[tuple[int, Key]]:
        out = []
        for i, (key, s) in enumerate(self.faces[x]):
            if len(set(s)) == len(s):
                out.append((i, key))
        return out

    def nondegenerate(self, n: int) -> list[Key]:
        return list(self.levels.get(n, []))

    @classmethod
    def from_ordered_simplices(cls, simplices: Iterable[Sequence[Key]],
                               order: Iterable[tuple[Key, Key]] | None = None
                               ) -> "SimplicialSet":
        """The ordered simplicial complex generated by vertex tuples (closed under faces).

        Each tuple must be strictly increasing for ``order``; without ``order``
        the tuples' own vertex order is used (and must be consistent).
        """
        closed: set[tuple] = set()
        for s in simplices:
            s = tuple(s)
            for r in range(1, len(s) + 1):
                closed.update(itertools.combinations(s, r))
        if order is None:
            pairs = {(a, b) for s in closed for a, b in itertools.combinations(s, 2)}
        else:
            pairs = set(order)
        for s in closed:
            if any((a, b) not in pairs for a, b in zip(s, s[1:])):
                raise NotDirected(f"simplex {s!r} is not strictly increasing")
        pairs = {((a,), (b,)) for a, b in pairs}
        levels: dict[int, list] = {}
        for s in sorted(closed, key=lambda s: (len(s), repr(s))):
            levels.setdefault(len(s) - 1, []).append(s)
        faces = {s: [s[:i] + s[i + 1:] for i in range(len(s))] for s in closed if len(s) > 1}
        return cls(levels, faces, pairs)

    def to_json(self) -> dict:
        return {"simplices": {str(n): [_jsonable(x) for x in xs] for n, xs in self.levels.items()},
                "faces": {repr(x): [[_jsonable(k), list(s)] for k, s in fs]
                          for x, fs in self.faces.items() if fs}}


def _unwrap(k):
    return k[0] if isinstance(k, tuple) and len(k) == 1 else k


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def simplicial_set_from_json(data: Mapping) -> SimplicialSet:
    """Build from ``{"simplices": [[v0, v1, ...], ...]}`` (ordered complex) or from
    ``{"levels": {n: [names]}, "faces": {name: [face names]}}``."""
    try:
        if "simplices" in data and isinstance(data["simplices"], list):
            order = data.get("order")
            return SimplicialSet.from_ordered_simplices(
                [tuple(s) for s in data["simplices"]],
                None if order is None else [tuple(p) for p in order])
        faces = {}
        for k, fs in data.get("faces", {}).items():
            faces[k] = [(f[0], tuple(f[1])) if isinstance(f, list) and len(f) == 2 and
                        isinstance(f[1], list) else f for f in fs]
        return SimplicialSet({int(n): xs for n, xs in data["levels"].items()}, faces)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad simplicial set JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# monoids and bar constructions


class DiscreteMonoid:
    """A finite monoid given by its multiplication table."""

    def __init__(self, elements: Sequence[Hashable], table: Mapping | Sequence[Sequence],
                 unit: Hashable, name: str = ""):
        self.elements = tuple(elements)
        self.unit = unit
        self.name = name
        idx = {e: k for k, e in enumerate(self.elements)}
        if isinstance(table, Mapping):
            self.table = {(a, b): table[(a, b)] for a in self.elements for b in self.elements}
        else:
            self.table = {(a, b): table[idx[a]][idx[b]] for a in self.elements
                          for b in self.elements}
        if unit not in idx:
            raise InputError("unit is not an element")
        for v in self.table.values():
            if v not in idx:
                raise InputError(f"product {v!r} is not an element")
        for a in self.elements:
            if self.mul(unit, a) != a or self.mul(a, unit) != a:
                raise InputError(f"unit law fails at {a!r}")
        for a, b, c in itertools.product(self.elements, repeat=3):
            if self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c)):
                raise InputError(f"associativity fails at ({a!r}, {b!r}, {c!r})")

    def mul(self, a, b):
        return self.table[(a, b)]

    def prod(self, seq: Iterable) -> Hashable:
        out = self.unit
        for q in seq:
            out = self.mul(out, q)
        return out

    def to_json(self) -> dict:
        return {"name": self.name, "elements": list(self.elements), "unit": self.unit,
                "table": [[self.mul(a, b) for b in self.elements] for a in self.elements]}

    @classmethod
    def from_json(cls, data: Mapping) -> "DiscreteMonoid":
        try:
            return cls(data["elements"], data["table"], data["unit"], data.get("name", ""))
        except (KeyError, TypeError, IndexError) as exc:
            raise InputError(f"bad monoid JSON: {exc}") from exc


def trivial_monoid() -> DiscreteMonoid:
    return DiscreteMonoid(("e",), [["e"]], "e", "trivial")


def cyclic_group(k: int) -> DiscreteMonoid:
    els = tuple(range(k))
    return DiscreteMonoid(els, [[(a + b) % k for b in els] for a in els], 0, f"Z/{k}")


def right_zero_monoid() -> DiscreteMonoid:
    """``{e, a, b}`` with ``xy = y`` for ``x, y`` in ``{a, b}``."""
    els = ("e", "a", "b")
    table = {(x, y): (x if y == "e" else y) for x in els for y in els}
    return DiscreteMonoid(els, table, "e", "right-zero")


def monoid_library() -> dict[str, DiscreteMonoid]:
    return {m.name: m for m in (trivial_monoid(), cyclic_group(2), cyclic_group(3),
                                right_zero_monoid())}


class RightModule:
    """A finite set with a right action of a discrete monoid."""

    def __init__(self, elements: Sequence[Hashable], monoid: DiscreteMonoid,
                 action: Mapping[tuple, Hashable]):
        self.elements = tuple(elements)
        self.monoid = monoid
        self.action = dict(action)
        Q = monoid
        for x in self.elements:
            if self.act(x, Q.unit) != x:
                raise NotAnAction(f"x e != x at {x!r}")
            for q, r in itertools.product(Q.elements, repeat=2):
                if self.act(self.act(x, q), r) != self.act(x, Q.mul(q, r)):
                    raise NotAnAction(f"(x q) r != x (q r) at ({x!r}, {q!r}, {r!r})")

    def act(self, x, q):
        try:
            return self.action[(x, q)]
        except KeyError:
            raise NotAnAction(f"action undefined on ({x!r}, {q!r})") from None

    @classmethod
    def point(cls, Q: DiscreteMonoid) -> "RightModule":
        return cls(("*",), Q, {("*", q): "*" for q in Q.elements})

    @classmethod
    def regular(cls, Q: DiscreteMonoid) -> "RightModule":
        return cls(Q.elements, Q, {(x, q): Q.mul(x, q) for x in Q.elements for q in Q.elements})


class BarComplex:
    """``B(F, Q)_n = F x Q^n`` up to degree ``truncation``.

    Faces: ``d_0(x, q_1, ...) = (x q_1, q_2, ...)``; ``d_i`` multiplies
    ``q_i q_{i+1}`` for ``0 < i < n``; ``d_n`` drops ``q_n``.  Degeneracies
    ``s_i`` insert the unit after ``q_i``.
    """

    def __init__(self, F: RightModule, Q: DiscreteMonoid, truncation: int = 5):
        if F.monoid is not Q and F.monoid.table != Q.table:
            raise NotAnAction("F is a module over a different monoid")
        if truncation < 0:
            raise InputError("truncation must be non-negative")
        self.F, self.Q, self.truncation = F, Q, int(truncation)

    def level(self, n: int) -> list[tuple]:
        return [(x,) + qs for x in self.F.elements
                for qs in itertools.product(self.Q.elements, repeat=n)]

    def level_sizes(self) -> list[int]:
        return [len(self.F.elements) * len(self.Q.elements) ** n
                for n in range(self.truncation + 1)]

    def face(self, t: tuple, i: int) -> tuple:
        x, qs = t[0], t[1:]
        n = len(qs)
        if not 0 <= i <= n or n == 0:
            raise InputError(f"face index {i} out of range for degree {n}")
        if i == 0:
            return (self.F.act(x, qs[0]),) + qs[1:]
        if i == n:
            return (x,) + qs[:-1]
        return (x,) + qs[:i - 1] + (self.Q.mul(qs[i - 1], qs[i]),) + qs[i + 1:]

    def degeneracy(self, t: tuple, i: int) -> tuple:
        return t[:i + 1] + (self.Q.unit,) + t[i + 1:]

    def pullback(self, t: tuple, f: Sequence[int]) -> tuple:
        """``f^*`` for a non-decreasing ``f: [n'] -> [n]``, by the product formula."""
        x, qs = t[0], t[1:]
        Q = self.Q
        x2 = self.F.act(x, Q.prod(qs[:f[0]]))
        ps = tuple(Q.prod(qs[f[i - 1]:f[i]]) for i in range(1, len(f)))
        return (x2,) + ps

    def is_degenerate(self, t: tuple) -> bool:
        return any(q == self.Q.unit for q in t[1:])

    def nondegenerate(self, n: int) -> list[tuple]:
        return [t for t in self.level(n) if not self.is_degenerate(t)]

    def normalized_faces(self, t: tuple) -> list[tuple[int, tuple]]:
        n = len(t) - 1
        if n == 0:
            return []
        out = []
        for i in range(n + 1):
            f = self.face(t, i)
            if not self.is_degenerate(f):
                out.append((i, f))
        return out

    def check_identities(self) -> list[tuple[str, tuple]]:
        """All simplicial identities, exhaustively up to the truncation."""
        bad = []
        d, s = self.face, self.degeneracy
        for n in range(self.truncation + 1):
            for t in self.level(n):
                for i, j in itertools.combinations(range(n + 1), 2):
                    if n >= 2 and d(d(t, j), i) != d(d(t, i), j - 1):
                        bad.append((f"d{i}d{j}", t))
                if n + 1 > self.truncation:
                    continue
                for j in range(n + 1):
                    u = s(t, j)
                    if d(u, j) != t or d(u, j + 1) != t:
                        bad.append((f"d s{j}", t))
                    for i in range(n + 2):
                        if i < j and d(u, i) != s(d(t, i), j - 1):
                            bad.append((f"d{i}s{j}", t))
                        if i > j + 1 and d(u, i) != s(d(t, i - 1), j):
                            bad.append((f"d{i}s{j}", t))
                    if n + 2 <= self.truncation:
                        for i in range(j + 1):
                            if s(s(t, j), i) != s(s(t, i), j + 1):
                                bad.append((f"s{i}s{j}", t))
        return bad


def bar(F: RightModule | None, Q: DiscreteMonoid, truncation: int = 5) -> BarComplex:
    """``B(F, Q)``; ``F = None`` gives ``BQ = B(point, Q)``."""
    return BarComplex(F if F is not None else RightModule.point(Q), Q, truncation)


# ---------------------------------------------------------------------------
# the contraction of B(Q, Q)


@dataclass
class RelationResult:
    name: str
    checked: int
    witness: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.witness is None


@dataclass
class ContractionReport:
    monoid: str
    max_degree: int
    relations: list[RelationResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.relations)

    def to_json(self) -> dict:
        return {"monoid": self.monoid, "max_degree": self.max_degree, "ok": self.ok,
                "relations": [{"name": r.name, "checked": r.checked, "ok": r.ok,
                               "witness": None if r.witness is None else list(r.witness)}
                              for r in self.relations]}


class _ExtraDegeneracyModel:
    """``B(Q, Q)_n = Q^{n+1}`` with the module coordinate last in the products.

    ``d_0`` drops ``q_0``, ``d_i`` multiplies ``q_{i-1} q_i`` for ``i >= 1``,
    ``s_i`` inserts the unit at position ``i``.  In this model the homotopy
    ``h_j(q) = (q_0, ..., q_{j-1}, q_j ... q_n, e, ..., e)`` contracts onto
    the unit simplex.
    """

    def __init__(self, Q: DiscreteMonoid, corrupt: bool = False):
        self.Q, self.corrupt = Q, corrupt

    def d(self, t: tuple, i: int) -> tuple:
        if i == 0:
            return t[1:]
        return t[:i - 1] + (self.Q.mul(t[i - 1], t[i]),) + t[i + 1:]

    def s(self, t: tuple, i: int) -> tuple:
        return t[:i] + (self.Q.unit,) + t[i:]

    def h(self, t: tuple, j: int) -> tuple:
        n = len(t) - 1
        head = self.Q.unit if self.corrupt else self.Q.prod(t[j:])
        return t[:j] + (head,) + (self.Q.unit,) * (n + 1 - j)


def bqq_contraction_check(Q: DiscreteMonoid, max_degree: int = 4,
                          corrupt: bool = False) -> ContractionReport:
    """Check the seven families of homotopy relations on every tuple up to ``max_degree``.

    With ``corrupt=True`` the product in ``h_j`` is replaced by the unit,
    which breaks ``d_{n+1} h_n = id``.
    """
    M = _ExtraDegeneracyModel(Q, corrupt)
    e = Q.unit
    names = ["d0 h0 = c_e", "d_{n+1} h_n = id", "d_i h_j = h_{j-1} d_i (i < j)",
             "d_{j+1} h_{j+1} = d_{j+1} h_j", "d_i h_j = h_j d_{i-1} (i > j+1)",
             "s_i h_j = h_{j+1} s_i (i <= j)", "s_i h_j = h_j s_{i-1} (i > j)"]
    results = {name: RelationResult(name, 0) for name in names}

    def record(name, ok, witness):
        r = results[name]
        r.checked += 1
        if not ok and r.witness is None:
            r.witness = witness

    for n in range(max_degree + 1):
        for t in itertools.product(Q.elements, repeat=n + 1):
            record(names[0], M.d(M.h(t, 0), 0) == (e,) * (n + 1), t)
            record(names[1], M.d(M.h(t, n), n + 1) == t, t)
            for j in range(n + 1):
                hj = M.h(t, j)
                for i in range(n + 2):
                    if i < j:
                        record(names[2], M.d(hj, i) == M.h(M.d(t, i), j - 1), t)
                    elif i > j + 1:
                        record(names[4], M.d(hj, i) == M.h(M.d(t, i - 1), j), t)
                if j + 1 <= n:
                    record(names[3], M.d(M.h(t, j + 1), j + 1) == M.d(hj, j + 1), t)
                for i in range(n + 2):
                    if i <= j:
                        record(names[5], M.s(hj, i) == M.h(M.s(t, i), j + 1), t)
                    else:
                        record(names[6], M.s(hj, i) == M.h(M.s(t, i - 1), j), t)
    return ContractionReport(Q.name, max_degree, [results[n] for n in names])


# ---------------------------------------------------------------------------
# homology


def chain_complex(S: SimplicialSet | BarComplex, truncation: int) -> SparseComplex:
    """Normalized chains in degrees ``0..truncation``."""
    cells: dict[int, list] = {}
    boundary: dict = {}
    for n in range(truncation + 1):
        xs = S.nondegenerate(n)
        cells[n] = [(n, x) for x in xs]
        for x in xs:
            bd: dict = {}
            for i, f in S.normalized_faces(x):
                key = (n - 1, f)
                bd[key] = bd.get(key, 0) + (-1) ** i
            boundary[(n, x)] = bd
    return SparseComplex(cells, boundary)


def realization_homology(S: SimplicialSet | BarComplex, truncation: int | None = None,
                         coefficients: int | str = "Z") -> GradedAbGroup:
    """Homology of the normalized chains of the ``truncation``-skeleton, in degrees
    below ``truncation`` (where it agrees with the homology of the realization)."""
    if truncation is None:
        truncation = S.truncation if isinstance(S, BarComplex) else S.max_degree + 1
    if isinstance(S, BarComplex) and truncation > S.truncation:
        raise InputError("truncation exceeds the bar complex truncation")
    C = chain_complex(S, truncation)
    if coefficients in ("Z", 0, None):
        H = C.homology()
        return GradedAbGroup({k: g for k, g in H.degrees if k < truncation})
    dims = C.homology_mod_p(int(coefficients))
    return GradedAbGroup({k: (d, ()) for k, d in dims.items() if k < truncation})


def base_simplicial_set(base: SimplicialBase) -> SimplicialSet:
    return SimplicialSet.from_ordered_simplices(base.simplices)


# ---------------------------------------------------------------------------
# covers and blow-ups


@dataclass
class StarCover:
    """Vertex stars of a directed simplicial set with the intersection check."""

    cover: DirectedCover
    vertex_names: dict[int, Key]
    intersection_ok: bool
    failures: list[Key]


def star_cover(Z: SimplicialSet) -> StarCover:
    """The cover of ``Z`` by open vertex stars, as a directed cover of its simplices.

    Also checks that the star of every simplex is the intersection of the
    stars of its vertices.
    """
    if not Z.is_directed():
        raise NotDirected("star covers need a directed simplicial set")
    verts = Z.nondegenerate(0)
    num = {v: k for k, v in enumerate(verts)}
    cells = {x: tuple(sorted(num[v] for v in Z.vertices(x))) for x in Z.dim_of}
    base = SimplicialBase(_closure(cells.values()), kind="complex")
    regions = {str(num[v]): base.star((num[v],)) for v in verts}
    order = [(str(num[a]), str(num[b])) for a, b in Z.vertex_order if a in num and b in num]
    if not order:
        order = [str(num[v]) for v in verts]
    cover = DirectedCover(base, regions, order)
    failures = []
    for x, c in cells.items():
        st = base.star(c)
        inter = cover.overlap(*[str(v) for v in c])
        if st != inter:
            failures.append(x)
    return StarCover(cover, {k: _unwrap(v) for v, k in num.items()}, not failures, failures)


def mv_blowup(cover: DirectedCover) -> tuple[SimplicialSet, dict]:
    """Combinatorial Mayer-Vietoris blow-up of a directed cover.

    Vertices are pairs ``(i, cell)`` with ``cell`` in ``U_i``; a simplex is a
    chain ``(i_0, c_0) < ... < (i_n, c_n)``, non-decreasing in both
    coordinates and strictly increasing as pairs, whose smallest cell ``c_0``
    lies in ``U_{i_0 ... i_n}``.  This is the diagonal of the bisimplicial
    set whose ``(p, q)`` simplices are a ``p``-chain of indices together with
    a ``q``-flag of cells in their intersection, so it has the homology of the
    realization of the blow-up.  Also returns the projection of each vertex
    to its cell.
    """
    if not cover.is_total():
        for c in cover.base.simplices:
            idx = cover.containing(c)
            if any(not cover.less(a, b) for a, b in zip(idx, idx[1:])):
                raise NotDirected(f"indices over {c} are not totally ordered")
    verts = [(i, c) for i in cover.indices for c in sorted(cover.regions[i],
                                                           key=lambda x: (len(x), x))]

    def below(a, b):
        (i, c), (j, d) = a, b
        return a != b and (i == j or cover.less(i, j)) and set(c) <= set(d)

    simplices = []

    def extend(chain):
        simplices.append(tuple(chain))
        c0 = chain[0][1]
        for v in verts:
            if below(chain[-1], v) and c0 in cover.regions[v[0]]:
                extend(chain + [v])

    for v in verts:
        extend([v])
    order = [(a, b) for a in verts for b in verts if below(a, b)]
    Z = SimplicialSet.from_ordered_simplices(simplices, order)
    return Z, {v: v[1] for v in verts}


# ---------------------------------------------------------------------------
# maps to BQ


@dataclass
class MVMap:
    """A simplicial map from the blow-up of a star cover to ``BQ``, or its obstruction."""

    valid: bool
    obstruction: tuple | None
    values: dict[tuple, tuple]

    def to_json(self) -> dict:
        return {"valid": self.valid,
                "obstruction": None if self.obstruction is None else _jsonable(self.obstruction),
                "simplices": len(self.values)}


def mv_simplicial_map(Z: SimplicialSet, target: BarComplex,
                      labels: Mapping[tuple[Key, Key], Hashable]) -> MVMap:
    """Extend edge labels ``h(i, j)`` (for vertices ``i < j`` of ``Z`` whose stars
    meet) to the simplicial map ``MV(star cover) -> BQ``.

    A simplex ``(i_0 <= ... <= i_n, cell)`` goes to ``(h(i_0, i_1), ...,
    h(i_{n-1}, i_n))`` with ``h(i, i) = e``.  The map is simplicial iff
    ``h(i, j) h(j, k) = h(i, k)`` wherever the three stars meet; otherwise the
    first failing 2-simplex is returned.
    """
    Q = target.Q
    if len(target.F.elements) != 1:
        raise InputError("target must be BQ = B(point, Q)")
    sc = star_cover(Z)
    cov = sc.cover
    name = {str(k): v for k, v in sc.vertex_names.items()}

    def h(a, b):
        if a == b:
            return Q.unit
        key = (name[a], name[b])
        if key not in labels:
            raise InputError(f"no label for the edge {key!r}")
        val = labels[key]
        if val not in Q.elements:
            raise InputError(f"label {val!r} is not a monoid element")
        return val

    for a, b in cov.pairs():
        h(a, b)
    for a, b, c in cov.triples():
        if Q.mul(h(a, b), h(b, c)) != h(a, c):
            cell = min(cov.overlap(a, b, c), key=lambda x: (len(x), x))
            return MVMap(False, (name[a], name[b], name[c], cell), {})
    values = {}
    for cell in cov.base.cells():
        idx = cov.containing(cell)
        for r in range(1, len(idx) + 1):
            for chain in itertools.combinations(idx, r):
                values[(tuple(name[i] for i in chain), cell)] = tuple(
                    h(a, b) for a, b in zip(chain, chain[1:]))
    for (chain, cell), val in values.items():
        n = len(chain) - 1
        for i in range(n + 1):
            if n == 0:
                break
            sub = chain[:i] + chain[i + 1:]
            if target.face(("*",) + val, i)[1:] != values[(sub, cell)]:
                raise InvariantViolation(f"map is not simplicial at {chain!r}")
    return MVMap(True, None, values)


# ---------------------------------------------------------------------------
# reference covers


def torus_base() -> SimplicialBase:
    """The seven-vertex triangulation of the torus."""
    tris = [(i, (i + 1) % 7, (i + 3) % 7) for i in range(7)] + \
           [(i, (i + 2) % 7, (i + 3) % 7) for i in range(7)]
    return SimplicialBase(_closure(tris), kind="complex")


def vertex_star_cover(base: SimplicialBase) -> DirectedCover:
    """Open stars of the vertices, ordered by vertex label."""
    verts = base.vertices
    return DirectedCover(base, {str(v): base.star((v,)) for v in verts}, [str(v) for v in verts])


def mv_cover_library() -> dict[str, DirectedCover]:
    """Six covers for comparing blow-up homology with base homology."""
    from .qbundle import circle_base, interval_base

    out = {}
    iv = interval_base(5)
    out["interval-2arcs"] = DirectedCover(
        iv, {"a": iv.star_of_vertices(range(0, 3)), "b": iv.star_of_vertices(range(2, 5))},
        ["a", "b"])
    out["circle-3arcs"] = vertex_star_cover(circle_base(3))
    c6 = circle_base(6)
    out["circle-3arcs-fine"] = DirectedCover(
        c6, {"a": c6.star_of_vertices((0, 1)), "b": c6.star_of_vertices((2, 3)),
             "c": c6.star_of_vertices((4, 5))}, ["a", "b", "c"])
    tri = SimplicialBase(_closure([(0, 1, 2)]), kind="complex")
    out["triangle-stars"] = vertex_star_cover(tri)
    ann = SimplicialBase(_closure([(0, 1, 3), (1, 3, 4), (1, 2, 4), (2, 4, 5), (0, 2, 5),
                                   (0, 3, 5)]), kind="complex")
    out["annulus-stars"] = vertex_star_cover(ann)
    out["torus-stars"] = vertex_star_cover(torus_base())
    return out
