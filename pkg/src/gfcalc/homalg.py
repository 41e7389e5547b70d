"""Integer homological algebra.

Smith normal form over Z, homology of finitely generated free chain complexes,
finitely generated graded abelian groups, the derived tensor product, and the
rank-one detection criterion for bounded complexes.

Chain complexes are homologically graded: ``d_k : C_k -> C_{k-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, NotAComplex

IntMat = list[list[int]]


def _identity(n: int) -> IntMat:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def _as_intmat(m) -> IntMat:
    arr = np.asarray(m, dtype=object)
    if arr.ndim != 2:
        if arr.size == 0:
            return []
        raise InputError("integer matrix must be two-dimensional")
    out = []
    for row in arr.tolist():
        r = []
        for e in row:
            if int(e) != e:
                raise InputError(f"non-integer entry {e!r}")
            r.append(int(e))
        out.append(r)
    return out


def _shape(m: IntMat, cols: int | None = None) -> tuple[int, int]:
    rows = len(m)
    if rows:
        return rows, len(m[0])
    return 0, cols or 0


def smith_normal_form(M, cols: int | None = None) -> tuple[IntMat, IntMat, IntMat]:
    """Return ``(U, D, V)`` with ``U M V = D``.

    ``U`` and ``V`` are unimodular and ``D`` is diagonal with non-negative
    entries ``d_1 | d_2 | ...``.  ``cols`` gives the column count when ``M``
    has no rows.

    >>> U, D, V = smith_normal_form([[2, 0], [0, 3]])
    >>> D
    [[1, 0], [0, 6]]
    """
    A = _as_intmat(M)
    m, n = _shape(A, cols)
    U = _identity(m)
    V = _identity(n)

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for row in A:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def add_row(dst, src, c):  # row_dst += c * row_src
        if c:
            A[dst] = [a + c * b for a, b in zip(A[dst], A[src])]
            U[dst] = [a + c * b for a, b in zip(U[dst], U[src])]

    def add_col(dst, src, c):  # col_dst += c * col_src
        if c:
            for row in A:
                row[dst] += c * row[src]
            for row in V:
                row[dst] += c * row[src]

    for t in range(min(m, n)):
        best = None
        for i in range(t, m):
            for j in range(t, n):
                if A[i][j] and (best is None or abs(A[i][j]) < abs(A[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        swap_rows(t, best[0])
        swap_cols(t, best[1])
        while True:
            p = A[t][t]
            dirty = False
            for i in range(t + 1, m):
                if A[i][t]:
                    add_row(i, t, -(A[i][t] // p))
                    if A[i][t]:
                        swap_rows(t, i)
                        dirty = True
                        break
            if dirty:
                continue
            for j in range(t + 1, n):
                if A[t][j]:
                    add_col(j, t, -(A[t][j] // p))
                    if A[t][j]:
                        swap_cols(t, j)
                        dirty = True
                        break
            if dirty:
                continue
            bad = next(
                ((i, j) for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % p),
                None,
            )
            if bad is None:
                break
            add_row(t, bad[0], 1)
        if A[t][t] < 0:
            A[t] = [-a for a in A[t]]
            U[t] = [-a for a in U[t]]
    return U, A, V


def invariant_factors(M, cols: int | None = None) -> list[int]:
    """Non-zero diagonal entries of the Smith normal form."""
    _, D, _ = smith_normal_form(M, cols)
    return [D[i][i] for i in range(min(len(D), len(D[0]) if D else 0)) if D[i][i]]


def int_det(M: IntMat) -> int:
    """Exact integer determinant (Bareiss)."""
    A = [list(r) for r in M]
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            r = next((r for r in range(k + 1, n) if A[r][k]), None)
            if r is None:
                return 0
            A[k], A[r] = A[r], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def rank_mod_p(M, p: int, cols: int | None = None) -> int:
    """Rank of an integer matrix over the field with ``p`` elements."""
    A = [[e % p for e in row] for row in _as_intmat(M)]
    m, n = _shape(A, cols)
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, m) if A[i][c]), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = pow(A[r][c], -1, p)
        A[r] = [(e * inv) % p for e in A[r]]
        for i in range(m):
            if i != r and A[i][c]:
                f = A[i][c]
                A[i] = [(a - f * b) % p for a, b in zip(A[i], A[r])]
        r += 1
        if r == m:
            break
    return r


# ---------------------------------------------------------------------------
# graded abelian groups


def normalize_torsion(orders: Iterable[int]) -> tuple[int, ...]:
    """Invariant-factor form of a direct sum of cyclic groups ``Z/o``.

    Orders equal to 1 are dropped; the result is sorted with each factor
    dividing the next.
    """
    orders = [abs(int(o)) for o in orders]
    if any(o == 0 for o in orders):
        raise InputError("torsion orders must be non-zero")
    orders = [o for o in orders if o > 1]
    if not orders:
        return ()
    diag = [[orders[i] if i == j else 0 for j in range(len(orders))] for i in range(len(orders))]
    return tuple(d for d in invariant_factors(diag) if d > 1)


@dataclass(frozen=True)
class GroupDegree:
    """``Z^free ⊕ Z/t_1 ⊕ ... ⊕ Z/t_k`` with ``t_1 | ... | t_k``."""

    free: int = 0
    torsion: tuple[int, ...] = ()

    def __post_init__(self):
        if self.free < 0:
            raise InputError("free rank must be non-negative")
        object.__setattr__(self, "torsion", normalize_torsion(self.torsion))

    def is_zero(self) -> bool:
        return self.free == 0 and not self.torsion

    def field_dim(self, p: int) -> int:
        """``dim_{F_p}`` of this group tensored with ``Z/p``."""
        return self.free + sum(1 for t in self.torsion if t % p == 0)


@dataclass(frozen=True)
class GradedAbGroup:
    """A finitely generated graded abelian group with finitely many non-zero degrees."""

    degrees: tuple[tuple[int, GroupDegree], ...] = ()

    def __init__(self, data: Mapping[int, GroupDegree | tuple | int] | None = None):
        items = {}
        for k, v in (data or {}).items():
            if isinstance(v, GroupDegree):
                g = v
            elif isinstance(v, int):
                g = GroupDegree(v)
            else:
                free, tors = v
                g = GroupDegree(int(free), tuple(tors))
            if not g.is_zero():
                items[int(k)] = g
        object.__setattr__(self, "degrees", tuple(sorted(items.items())))

    def __getitem__(self, k: int) -> GroupDegree:
        return dict(self.degrees).get(k, GroupDegree())

    def support(self) -> list[int]:
        return [k for k, _ in self.degrees]

    def is_zero(self) -> bool:
        return not self.degrees

    def is_z_in_degree(self) -> int | None:
        """Return ``d`` if the group is ``Z`` concentrated in degree ``d``."""
        if len(self.degrees) == 1:
            k, g = self.degrees[0]
            if g.free == 1 and not g.torsion:
                return k
        return None

    def field_dims(self, p: int) -> dict[int, int]:
        """Degreewise ``dim_{F_p}(H ⊗ Z/p)`` (no Tor term; see :func:`derived_mod_p`)."""
        return {k: g.field_dim(p) for k, g in self.degrees}

    def shift(self, s: int) -> "GradedAbGroup":
        return GradedAbGroup({k + s: g for k, g in self.degrees})

    def __repr__(self) -> str:
        if not self.degrees:
            return "GradedAbGroup(0)"
        parts = []
        for k, g in self.degrees:
            terms = ([f"Z^{g.free}"] if g.free else []) + [f"Z/{t}" for t in g.torsion]
            parts.append(f"{k}: " + " + ".join(terms))
        return "GradedAbGroup(" + "; ".join(parts) + ")"

    def to_json(self) -> list[dict]:
        return [{"degree": k, "free": g.free, "torsion": list(g.torsion)} for k, g in self.degrees]

    @classmethod
    def from_json(cls, data: Sequence[Mapping]) -> "GradedAbGroup":
        try:
            acc: dict[int, tuple[int, list[int]]] = {}
            for entry in data:
                k = int(entry["degree"])
                free, tors = acc.get(k, (0, []))
                acc[k] = (free + int(entry.get("free", 0)), tors + list(entry.get("torsion", [])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad GradedAbGroup JSON: {data!r}") from exc
        return cls(acc)


def direct_sum_groups(*groups: GradedAbGroup) -> GradedAbGroup:
    acc: dict[int, tuple[int, list[int]]] = {}
    for G in groups:
        for k, g in G.degrees:
            free, tors = acc.get(k, (0, []))
            acc[k] = (free + g.free, tors + list(g.torsion))
    return GradedAbGroup(acc)


def _tensor_degree(a: GroupDegree, b: GroupDegree) -> tuple[int, list[int]]:
    tors = [t for t in a.torsion for _ in range(b.free)]
    tors += [t for t in b.torsion for _ in range(a.free)]
    tors += [math.gcd(s, t) for s in a.torsion for t in b.torsion]
    return a.free * b.free, tors


def _tor_degree(a: GroupDegree, b: GroupDegree) -> list[int]:
    return [math.gcd(s, t) for s in a.torsion for t in b.torsion]


def derived_tensor(A: GradedAbGroup, B: GradedAbGroup) -> GradedAbGroup:
    """Homology of ``A ⊗^L B`` for graded groups viewed as complexes with zero differential.

    Degree ``n`` is ``⊕_{i+j=n} A_i ⊗ B_j  ⊕  ⊕_{i+j=n-1} Tor(A_i, B_j)``.
    """
    acc: dict[int, tuple[int, list[int]]] = {}

    def add(k, free, tors):
        f0, t0 = acc.get(k, (0, []))
        acc[k] = (f0 + free, t0 + tors)

    for i, a in A.degrees:
        for j, b in B.degrees:
            free, tors = _tensor_degree(a, b)
            add(i + j, free, tors)
            tor = _tor_degree(a, b)
            if tor:
                add(i + j + 1, 0, tor)
    return GradedAbGroup(acc)


def cyclic(order: int, degree: int = 0) -> GradedAbGroup:
    """``Z[degree]`` for ``order == 0``, otherwise ``Z/order`` in ``degree``."""
    if order == 0:
        return GradedAbGroup({degree: GroupDegree(1)})
    return GradedAbGroup({degree: GroupDegree(0, (order,))})


def derived_mod_p(A: GradedAbGroup, p: int) -> dict[int, int]:
    """Degreewise ``F_p``-dimensions of ``A ⊗^L Z/p``."""
    T = derived_tensor(A, cyclic(p))
    return {k: g.field_dim(p) for k, g in T.degrees}


def _prime_factors(n: int) -> set[int]:
    out, d = set(), 2
    while d * d <= n:
        while n % d == 0:
            out.add(d)
            n //= d
        d += 1
    if n > 1:
        out.add(n)
    return out


def _is_prime(p: int) -> bool:
    return p >= 2 and _prime_factors(p) == {p}


def torsion_primes(*groups: GradedAbGroup) -> set[int]:
    out: set[int] = set()
    for G in groups:
        for _, g in G.degrees:
            for t in g.torsion:
                out |= _prime_factors(t)
    return out


def detect_rank_one(A: GradedAbGroup, B: GradedAbGroup, primes: Sequence[int]) -> int | None:
    """Return ``d`` if ``A ≅ Z[d]`` is forced by the mod-``p`` tensor criterion, else ``None``.

    The criterion asks that ``(A ⊗^L B) ⊗^L Z/p`` be one-dimensional over
    ``F_p`` for every prime.  All primes coprime to the torsion of ``A`` and
    ``B`` give the same answer, so it suffices to test one such prime together
    with every prime dividing a torsion order; the latter are always added to
    ``primes``.  At least one given prime must be coprime to all torsion.
    """
    primes = sorted(set(int(p) for p in primes))
    if not primes or not all(_is_prime(p) for p in primes):
        raise InputError("primes must be a non-empty list of primes")
    bad = torsion_primes(A, B)
    if all(p in bad for p in primes):
        raise InputError("need a prime coprime to all torsion orders")
    AB = derived_tensor(A, B)
    for p in sorted(set(primes) | bad):
        dims = derived_mod_p(AB, p)
        if sum(dims.values()) != 1:
            return None
    # decomposition argument: A_f ⊗ B_f has rank one and no torsion survives
    if bad:
        return None
    free_degrees = [k for k, g in A.degrees if g.free]
    if len(free_degrees) != 1 or A[free_degrees[0]].free != 1:
        return None
    return free_degrees[0]


# ---------------------------------------------------------------------------
# chain complexes


@dataclass
class ChainComplexZ:
    """Free chain complex ``... -> C_k -> C_{k-1} -> ...`` over Z.

    ``ranks[k]`` is the rank of ``C_k``; ``boundaries[k]`` is the integer
    matrix of ``d_k : C_k -> C_{k-1}`` with shape ``(ranks[k-1], ranks[k])``.
    Missing boundaries are zero.
    """

    ranks: dict[int, int]
    boundaries: dict[int, IntMat] = field(default_factory=dict)
    check: bool = True

    def __post_init__(self):
        self.ranks = {int(k): int(v) for k, v in self.ranks.items() if int(v) > 0}
        bd = {}
        for k, m in self.boundaries.items():
            k = int(k)
            m = _as_intmat(m) if len(m) else []
            rows, cols = self.ranks.get(k - 1, 0), self.ranks.get(k, 0)
            if rows and cols:
                if len(m) != rows or any(len(r) != cols for r in m):
                    raise InputError(f"d_{k} has wrong shape, expected {rows}x{cols}")
                bd[k] = m
        self.boundaries = bd
        if self.check:
            for k in self.boundaries:
                if k - 1 in self.boundaries:
                    prod = np.asarray(self.boundaries[k - 1], dtype=object).dot(
                        np.asarray(self.boundaries[k], dtype=object))
                    if np.any(prod != 0):
                        raise NotAComplex(f"d_{k-1} d_{k} != 0")

    def d(self, k: int) -> IntMat:
        return self.boundaries.get(k, [])

    def to_sparse(self) -> "SparseComplex":
        cells: dict[int, list] = {}
        bd: dict = {}
        for k, r in self.ranks.items():
            cells[k] = [(k, i) for i in range(r)]
            m = self.d(k)
            for j in range(r):
                col = {}
                if m:
                    for i in range(len(m)):
                        if m[i][j]:
                            col[(k - 1, i)] = m[i][j]
                bd[(k, j)] = col
        return SparseComplex(cells, bd)


def homology(C: ChainComplexZ) -> GradedAbGroup:
    """Integral homology ``H_k = ker d_k / im d_{k+1}`` via elimination and SNF."""
    return C.to_sparse().homology()


def homology_dims_mod_p(C: ChainComplexZ, p: int) -> dict[int, int]:
    """``dim_{F_p} H_k(C ⊗ F_p)`` for every degree."""
    return C.to_sparse().homology_mod_p(p)


class SparseComplex:
    """A based free chain complex with sparse integer boundaries.

    ``cells[k]`` lists hashable cell keys of degree ``k``; ``boundary[c]`` maps
    faces of ``c`` to non-zero integer coefficients.  Homology is computed by
    repeatedly cancelling pairs with unit incidence (an exact chain-level
    reduction) and finishing with Smith normal form on what remains.
    """

    def __init__(self, cells: Mapping[int, Sequence], boundary: Mapping):
        self.dim_of = {}
        self.cells = {}
        for k, cs in cells.items():
            self.cells[int(k)] = list(cs)
            for c in cs:
                self.dim_of[c] = int(k)
        self.boundary = {c: {f: int(v) for f, v in boundary.get(c, {}).items() if v}
                         for c in self.dim_of}

    def _reduce(self, p: int | None):
        """Return surviving cells per degree and their boundary after cancellation."""
        bd = {c: dict(b) for c, b in self.boundary.items()}
        if p is not None:
            bd = {c: {f: v % p for f, v in b.items() if v % p} for c, b in bd.items()}
        cob: dict = {c: set() for c in bd}
        for c, b in bd.items():
            for f in b:
                cob[f].add(c)
        alive = set(bd)
        order = sorted(bd, key=lambda c: (self.dim_of[c], repr(c)), reverse=True)

        def unit(v):
            return (v % p != 0) if p is not None else v in (1, -1)

        changed = True
        while changed:
            changed = False
            for tau in order:
                if tau not in alive:
                    continue
                cand = [f for f, v in bd[tau].items() if unit(v)]
                if not cand:
                    continue
                sigma = min(cand, key=lambda f: (len(cob[f]), repr(f)))
                u = bd[tau][sigma]
                uinv = pow(u, -1, p) if p is not None else u
                for c in list(cob[sigma]):
                    if c == tau:
                        continue
                    coef = bd[c][sigma]
                    factor = (coef * uinv) % p if p is not None else coef * uinv
                    for f, v in bd[tau].items():
                        nv = bd[c].get(f, 0) - factor * v
                        if p is not None:
                            nv %= p
                        if nv:
                            if f not in bd[c]:
                                cob[f].add(c)
                            bd[c][f] = nv
                        elif f in bd[c]:
                            del bd[c][f]
                            cob[f].discard(c)
                for c in cob[tau]:
                    bd[c].pop(tau, None)
                for f in bd[tau]:
                    cob[f].discard(tau)
                for f in bd[sigma]:
                    cob[f].discard(sigma)
                alive.discard(tau)
                alive.discard(sigma)
                del bd[tau], bd[sigma], cob[tau], cob[sigma]
                changed = True
        remaining: dict[int, list] = {}
        for c in sorted(alive, key=lambda c: (self.dim_of[c], repr(c))):
            remaining.setdefault(self.dim_of[c], []).append(c)
        return remaining, bd

    def homology(self) -> GradedAbGroup:
        remaining, bd = self._reduce(None)
        index = {k: {c: i for i, c in enumerate(cs)} for k, cs in remaining.items()}
        ranks, tors = {}, {}
        for k, cs in remaining.items():
            rows = index.get(k - 1, {})
            mat = [[0] * len(cs) for _ in range(len(rows))]
            for j, c in enumerate(cs):
                for f, v in bd[c].items():
                    mat[rows[f]][j] = v
            facs = invariant_factors(mat, len(cs)) if rows else []
            ranks[k] = len(facs)
            tors[k - 1] = [f for f in facs if f > 1]
        out = {}
        for k, cs in remaining.items():
            free = len(cs) - ranks.get(k, 0) - ranks.get(k + 1, 0)
            out[k] = (free, tors.get(k, []))
        for k, t in tors.items():
            if k not in out and t:
                out[k] = (0, t)
        return GradedAbGroup(out)

    def homology_mod_p(self, p: int) -> dict[int, int]:
        remaining, bd = self._reduce(p)
        # over a field the cancellation removes every non-zero entry
        assert all(not bd[c] for cs in remaining.values() for c in cs)
        return {k: len(cs) for k, cs in remaining.items() if cs}
