"""Non-degenerate quadratic forms with exact rational entries.

A :class:`QuadForm` stores the symmetric matrix ``M`` of ``q(u) = u^T M u``.
Forms make a monoid under block direct sum whose unit is the 0-dimensional
form.  Invariants (index, coindex, signature) are computed exactly by a
symmetric LDL^T elimination over the rationals.

The module also provides the product cut-off functions ``chi_q`` used by the
modified stabilization of linear-at-infinity functions.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateForm, InputError

Rational = Fraction


def as_fraction(x) -> Fraction:
    """Convert an int, Fraction, float or ``"p/q"`` string to a Fraction.

    Floats are converted exactly (their binary value), so prefer strings or
    integers for exact input.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InputError(f"boolean is not a rational: {x!r}")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(float(x)):
            raise InputError(f"non-finite entry {x!r}")
        return Fraction(float(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"cannot parse rational {x!r}") from exc
    raise InputError(f"cannot interpret {x!r} as a rational")


def fraction_str(x: Fraction) -> str:
    """Render a Fraction as ``"p/q"`` (``"p"`` when the denominator is 1)."""
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _to_matrix(rows) -> tuple[tuple[Fraction, ...], ...]:
    mat = tuple(tuple(as_fraction(e) for e in row) for row in rows)
    n = len(mat)
    if any(len(row) != n for row in mat):
        raise InputError("quadratic form matrix must be square")
    return mat


def ldl_inertia(mat: Sequence[Sequence[Fraction]]) -> tuple[int, int, int]:
    """Return ``(positive, negative, zero)`` eigenvalue counts of a symmetric matrix.

    Uses exact symmetric elimination.  At each step the first non-zero diagonal
    entry of the remaining block becomes the pivot.  When the remaining diagonal
    vanishes but some off-diagonal entry ``a_kl`` (smallest ``k``, then smallest
    ``l``) is non-zero, the congruence ``e_k <- e_k + e_l`` creates the diagonal
    entry ``2 a_kl``.  A zero remaining block contributes zero eigenvalues.

    >>> ldl_inertia([[Fraction(0), Fraction(1, 2)], [Fraction(1, 2), Fraction(0)]])
    (1, 1, 0)
    """
    a = [list(map(Fraction, row)) for row in mat]
    n = len(a)
    pos = neg = 0
    active = list(range(n))
    while active:
        pivot = next((i for i in active if a[i][i] != 0), None)
        if pivot is None:
            pair = next(
                ((k, l) for k in active for l in active if l != k and a[k][l] != 0),
                None,
            )
            if pair is None:
                return pos, neg, n - pos - neg
            k, l = pair
            for j in range(n):
                a[k][j] += a[l][j]
            for j in range(n):
                a[j][k] += a[j][l]
            pivot = k
        p = a[pivot][pivot]
        if p > 0:
            pos += 1
        else:
            neg += 1
        active.remove(pivot)
        prow = a[pivot]
        for i in active:
            factor = a[i][pivot] / p
            if factor:
                row = a[i]
                for j in active:
                    row[j] -= factor * prow[j]
    return pos, neg, 0


def det(mat: Sequence[Sequence[Fraction]]) -> Fraction:
    """Exact determinant by fraction-valued Gaussian elimination."""
    a = [list(map(Fraction, row)) for row in mat]
    n = len(a)
    result = Fraction(1)
    for c in range(n):
        r = next((r for r in range(c, n) if a[r][c] != 0), None)
        if r is None:
            return Fraction(0)
        if r != c:
            a[c], a[r] = a[r], a[c]
            result = -result
        p = a[c][c]
        result *= p
        for r2 in range(c + 1, n):
            f = a[r2][c] / p
            if f:
                for j in range(c, n):
                    a[r2][j] -= f * a[c][j]
    return result


class Invariants(NamedTuple):
    """Exact numerical invariants of a non-degenerate form."""

    dim: int
    index: int
    coindex: int
    signature: int


@dataclass(frozen=True)
class QuadForm:
    """A non-degenerate quadratic form ``q(u) = u^T mat u`` with rational entries.

    Instances are immutable and validated on construction: ``mat`` must be
    square, exactly symmetric and of non-zero determinant.
    """

    mat: tuple[tuple[Fraction, ...], ...]

    def __init__(self, mat: Iterable[Iterable] = ()):
        m = _to_matrix(mat)
        n = len(m)
        for i in range(n):
            for j in range(i + 1, n):
                if m[i][j] != m[j][i]:
                    raise InputError(f"matrix not symmetric at ({i}, {j})")
        object.__setattr__(self, "mat", m)
        if n and ldl_inertia(m)[2]:
            raise DegenerateForm("quadratic form has zero determinant")

    @property
    def dim(self) -> int:
        return len(self.mat)

    def array(self) -> np.ndarray:
        """Float copy of the matrix."""
        return np.array([[float(e) for e in row] for row in self.mat], dtype=float).reshape(
            self.dim, self.dim
        )

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.array() @ u)

    def gradient(self, u) -> np.ndarray:
        """The linear automorphism ``u -> 2 mat u``."""
        return 2.0 * (self.array() @ np.asarray(u, dtype=float))

    def __repr__(self) -> str:
        rows = ", ".join("[" + ", ".join(fraction_str(e) for e in r) + "]" for r in self.mat)
        return f"QuadForm([{rows}])"

    def to_json(self) -> dict:
        return {"dim": self.dim, "mat": [[fraction_str(e) for e in row] for row in self.mat]}

    @classmethod
    def from_json(cls, data: dict) -> "QuadForm":
        try:
            mat = data["mat"]
            dim = int(data.get("dim", len(mat)))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad QuadForm JSON: {data!r}") from exc
        if dim != len(mat):
            raise InputError(f"dim {dim} does not match matrix size {len(mat)}")
        return cls(mat)


def unit() -> QuadForm:
    """The 0-dimensional form (monoid unit)."""
    return QuadForm(())


def diagonal(*entries) -> QuadForm:
    """The form ``sum_i entries[i] * u_i^2``."""
    n = len(entries)
    return QuadForm(
        [[as_fraction(entries[i]) if i == j else Fraction(0) for j in range(n)] for i in range(n)]
    )


def direct_sum(*forms: QuadForm) -> QuadForm:
    """Block-diagonal sum of forms, in the order given."""
    n = sum(f.dim for f in forms)
    rows = [[Fraction(0)] * n for _ in range(n)]
    offset = 0
    for f in forms:
        for i, row in enumerate(f.mat):
            rows[offset + i][offset : offset + f.dim] = row
        offset += f.dim
    return QuadForm(rows)


def hyperbolic(k: int = 1) -> QuadForm:
    """The form ``h^k``: ``k`` copies of ``h(x, y) = xy`` on consecutive pairs."""
    if k < 0:
        raise InputError("hyperbolic power must be non-negative")
    half = Fraction(1, 2)
    h = QuadForm([[0, half], [half, 0]])
    return direct_sum(*([h] * k))


def invariants(q: QuadForm) -> Invariants:
    """Return ``(dim, index, coindex, signature)`` with signature = coindex - index."""
    pos, neg, zero = ldl_inertia(q.mat)
    if zero:
        raise DegenerateForm("form is degenerate")
    return Invariants(q.dim, neg, pos, pos - neg)


def negate(q: QuadForm) -> QuadForm:
    return QuadForm([[-e for e in row] for row in q.mat])


def check_permutation(sigma: Sequence[int], n: int) -> tuple[int, ...]:
    sigma = tuple(int(s) for s in sigma)
    if sorted(sigma) != list(range(n)):
        raise InputError(f"{sigma!r} is not a permutation of {n} letters")
    return sigma


def compose(sigma: Sequence[int], tau: Sequence[int]) -> tuple[int, ...]:
    """Index array of ``sigma o tau`` for the convention used by :func:`permute`."""
    return tuple(tau[s] for s in sigma)


def permute(q: QuadForm, sigma: Sequence[int]) -> QuadForm:
    """The form ``u -> q(sigma(u))`` where ``sigma(u)_i = u[sigma[i]]`` (0-based)."""
    sigma = check_permutation(sigma, q.dim)
    n = q.dim
    rows = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            rows[sigma[i]][sigma[j]] = q.mat[i][j]
    return QuadForm(rows)


def interleave_permutation(n: int) -> tuple[int, ...]:
    """Permutation taking block order ``(u_1..u_n, u'_1..u'_n)`` to ``(u_1, u'_1, ...)``.

    With this ``sigma``, the vector ``sigma(z)`` for interleaved ``z`` is in
    block order, so ``permute(a, sigma)`` re-expresses a block-ordered form
    ``a`` in interleaved coordinates.
    """
    return tuple([2 * i for i in range(n)] + [2 * i + 1 for i in range(n)])


def difference_form(q: QuadForm) -> QuadForm:
    """The form ``q(u) - q(u')`` in interleaved coordinates ``(u_1, u'_1, ...)``."""
    return permute(direct_sum(q, negate(q)), interleave_permutation(q.dim))


def arc_coefficients(t) -> tuple[Fraction, Fraction]:
    """Rational point ``(c, s)`` on the unit quarter circle, from ``(1,0)`` at 0 to ``(0,1)`` at 1.

    Uses the rational parametrization ``c = (1-t^2)/(1+t^2)``, ``s = 2t/(1+t^2)``,
    which traces the same arc as ``(cos(pi t/2), sin(pi t/2))`` monotonically
    while keeping exact arithmetic.
    """
    t = as_fraction(t)
    if not 0 <= t <= 1:
        raise InputError("homotopy parameter must lie in [0, 1]")
    d = 1 + t * t
    return (1 - t * t) / d, (2 * t) / d


def homotopy_to_hyperbolic(a: QuadForm, b: QuadForm, t) -> QuadForm:
    """Evaluate the circular interpolation ``c(t) a + s(t) b`` between two forms.

    Raises :class:`DegenerateForm` if the interpolant is singular at ``t``.
    """
    if a.dim != b.dim:
        raise InputError("homotopy endpoints must have equal dimension")
    c, s = arc_coefficients(t)
    rows = [[c * x + s * y for x, y in zip(ra, rb)] for ra, rb in zip(a.mat, b.mat)]
    return QuadForm(rows)


# ---------------------------------------------------------------------------
# cut-off functions


@dataclass(frozen=True)
class CutoffProfile:
    """One-variable profile ``psi``: 1 on ``|s| <= one_radius``, 0 on ``|s| >= support_radius``.

    In between, ``psi`` is the quintic smootherstep ``1 - S(t)`` with
    ``S(t) = 10t^3 - 15t^4 + 6t^5`` and ``t = (|s| - r1)/(r2 - r1)``, which is
    C^2 and monotone on each side.  For the default radii ``(1, 3)`` one has
    ``max |psi'| = 15/16`` and ``|psi'(s)| < 0.49 |s|`` everywhere.
    """

    one_radius: Fraction = Fraction(1)
    support_radius: Fraction = Fraction(3)

    def __post_init__(self):
        r1 = as_fraction(self.one_radius)
        r2 = as_fraction(self.support_radius)
        object.__setattr__(self, "one_radius", r1)
        object.__setattr__(self, "support_radius", r2)
        if r1 <= 0 or r2 - r1 < 2:
            raise InputError("cut-off profile needs one_radius > 0 and a transition width >= 2")

    def _t(self, s):
        r1 = float(self.one_radius)
        width = float(self.support_radius) - r1
        return np.clip((np.abs(s) - r1) / width, 0.0, 1.0), width

    def psi(self, s):
        t, _ = self._t(s)
        return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))

    def psi_prime(self, s):
        t, width = self._t(s)
        return -np.sign(s) * 30.0 * t * t * (1.0 - t) ** 2 / width

    def psi_second(self, s):
        t, width = self._t(s)
        return -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (width * width)

    @property
    def slope_ratio(self) -> float:
        """An upper bound for ``sup |psi'(s) / s|``, from a dense grid plus 1% margin."""
        return _slope_ratio(self)


@functools.lru_cache(maxsize=None)
def _slope_ratio(profile: CutoffProfile) -> float:
    s = np.linspace(float(profile.one_radius), float(profile.support_radius), 20001)
    return 1.01 * float(np.max(np.abs(profile.psi_prime(s)) / s))


DEFAULT_PROFILE = CutoffProfile()


def form_components(q: QuadForm) -> list[list[int]]:
    """Index sets of the connected blocks of ``q`` (coordinates linked by non-zero entries)."""
    n = q.dim
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if q.mat[i][j]:
                ri, rj = find(i), find(j)
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def cutoff_scales(q: QuadForm, profile: CutoffProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Per-coordinate factors ``c_j`` with ``chi_q(u) = prod_j psi(c_j (grad q (u))_j)``.

    On a connected block ``B`` with matrix ``A_B = 2 mat_B`` every factor is
    ``(2 L |A_B|)^(-1/2)``, where ``L`` bounds ``|psi'(s)/s|``.  Then
    ``|grad chi_q| <= |grad q| / 2``, and the factors only depend on the
    block, which keeps the product and permutation laws.  The factors are
    rounded to rationals of denominator at most 4096 so that expressions
    built from them stay readable.
    """
    return np.array([float(c) for c in cutoff_scale_fractions(q, profile)])


@functools.lru_cache(maxsize=4096)
def cutoff_scale_fractions(q: QuadForm,
                           profile: CutoffProfile = DEFAULT_PROFILE) -> tuple[Fraction, ...]:
    """The factors of :func:`cutoff_scales` as exact rationals."""
    scales = [Fraction(1)] * q.dim
    mat = q.array()
    ratio = profile.slope_ratio
    for comp in form_components(q):
        block = 2.0 * mat[np.ix_(comp, comp)]
        norm = float(np.max(np.abs(np.linalg.eigvalsh(block))))
        c = Fraction(1.0 / math.sqrt(2.0 * ratio * norm)).limit_denominator(4096)
        for j in comp:
            scales[j] = c
    return tuple(scales)


def cutoff_eval(q: QuadForm, u, profile: CutoffProfile = DEFAULT_PROFILE) -> float:
    """``chi_q(u) = prod_j psi(c_j (grad q (u))_j)``; ``chi`` of the unit form is 1."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != q.dim:
        raise InputError(f"point of length {u.shape[0]} for form of dim {q.dim}")
    if q.dim == 0:
        return 1.0
    return float(np.prod(profile.psi(cutoff_scales(q, profile) * q.gradient(u))))


def cutoff_gradient(q: QuadForm, u, profile: CutoffProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Analytic gradient of ``chi_q`` at ``u``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if q.dim == 0:
        return np.zeros(0)
    c = cutoff_scales(q, profile)
    z = c * q.gradient(u)
    vals = profile.psi(z)
    ders = profile.psi_prime(z)
    partial = np.empty_like(z)
    for j in range(z.shape[0]):
        partial[j] = c[j] * ders[j] * np.prod(np.delete(vals, j))
    return 2.0 * q.array().T @ partial


def cutoff_support_halfwidths(q: QuadForm, scale: float = 1.0,
                              profile: CutoffProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Per-coordinate half-widths of a box containing ``supp chi_q(u / scale)``.

    The support is ``{u : |c_j (2 mat u / scale)_j| < r2}``, a parallelotope
    whose bounding box has half-widths ``scale * r2 * sum_j |(2 mat)^{-1}_{ij}| / c_j``.
    """
    if q.dim == 0:
        return np.zeros(0)
    inv = np.linalg.inv(2.0 * q.array())
    radii = float(profile.support_radius) / cutoff_scales(q, profile)
    return scale * np.abs(inv) @ radii
