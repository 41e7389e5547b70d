"""Linear symplectic algebra for stabilized Lagrangians.

Conventions.  A vector of ``C^N = R^N x iR^N`` is the column ``[x; y]`` and the
symplectic form is ``omega(a, b) = a^T Omega b`` with ``Omega = [[0, I], [-I, 0]]``.
A Lagrangian of ``E x C^n`` (``E = C^m``) is stored as a ``2N x N`` basis matrix,
``N = m + n``, whose first ``N`` rows are the real coordinates
``(x_E, x_S)`` and last ``N`` rows the imaginary ones ``(y_E, y_S)``.  The
vertical subspace is ``V = iR^m`` and its fixed complement is ``H = R^m``.

Matrices are exact (:class:`sympy.Matrix` with rational entries) whenever all
inputs are rational, and ``float64`` :mod:`numpy` arrays otherwise.  Every
operation preserves the backend of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import sympy
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .errors import (InputError, InvariantViolation, NotGraphical, NotInFiber, NotTransverse,
                     RankDeficient, SingularB, StepTooLarge)
from .quadform import QuadForm, as_fraction

FLOAT_RANK_TOL = 1e-8
FLOAT_ISOTROPY_TOL = 1e-10
DEFAULT_RADIUS = 0.1

Mat = "sympy.Matrix | np.ndarray"


# ---------------------------------------------------------------------------
# backend helpers


def is_exact(M) -> bool:
    return isinstance(M, sympy.MatrixBase)


def _rational(x):
    return sympy.Rational(as_fraction(x).numerator, as_fraction(x).denominator)


def exact(M) -> sympy.Matrix:
    """Exact copy of ``M`` (ints, Fractions, ``"p/q"`` strings or an exact matrix)."""
    if is_exact(M):
        return sympy.Matrix(M)
    if isinstance(M, np.ndarray) and M.dtype.kind == "f":
        raise InputError("cannot make a float matrix exact")
    rows = [list(r) for r in M]
    if not rows:
        return sympy.zeros(0, 0)
    return sympy.Matrix([[_rational(e) for e in r] for r in rows])


def as_matrix(M):
    """Exact matrix for rational input, ``float64`` array for float input."""
    if is_exact(M):
        return M
    if isinstance(M, np.ndarray):
        if M.dtype.kind in "iu":
            return exact(M.tolist())
        if M.dtype == object:
            return exact(M.tolist())
        return M.astype(float)
    rows = [list(r) for r in M]
    if any(isinstance(e, float) for r in rows for e in r):
        return np.array(rows, dtype=float)
    return exact(rows)


def to_float(M) -> np.ndarray:
    if is_exact(M):
        return np.array(M.tolist(), dtype=float).reshape(M.shape)
    return np.asarray(M, dtype=float)


def _like(M, *others):
    """Return the shared backend for a set of matrices (exact only if all are)."""
    return all(is_exact(o) for o in (M,) + others)


def _coerce(exact_mode: bool, M):
    if exact_mode:
        return M if is_exact(M) else exact(M)
    return to_float(M)


def eye(n: int, exact_mode: bool):
    return sympy.eye(n) if exact_mode else np.eye(n)


def zeros(r: int, c: int, exact_mode: bool):
    return sympy.zeros(r, c) if exact_mode else np.zeros((r, c))


def block(rows, exact_mode: bool):
    if exact_mode:
        return sympy.Matrix(sympy.BlockMatrix([[exact(b) if not is_exact(b) else b for b in r]
                                               for r in rows]))
    return np.block([[to_float(b) for b in r] for r in rows])


def hstack(*mats):
    ex_mode = all(is_exact(m) for m in mats)
    if ex_mode:
        return sympy.Matrix.hstack(*mats)
    return np.hstack([to_float(m) for m in mats])


def vstack(*mats):
    ex_mode = all(is_exact(m) for m in mats)
    if ex_mode:
        return sympy.Matrix.vstack(*mats)
    return np.vstack([to_float(m) for m in mats])


def shape(M) -> tuple[int, int]:
    return tuple(M.shape) if is_exact(M) else tuple(np.shape(M))


def _dm(M) -> DomainMatrix:
    return DomainMatrix.from_Matrix(M).convert_to(QQ)


def rank(M) -> int:
    r, c = shape(M)
    if r == 0 or c == 0:
        return 0
    if is_exact(M):
        return _dm(M).rank()
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > FLOAT_RANK_TOL * max(1.0, s[0])))


def nullspace(M):
    """Basis of ``ker M`` as the columns of a matrix."""
    r, c = shape(M)
    if is_exact(M):
        if r == 0:
            return sympy.eye(c)
        ns = _dm(M).nullspace().to_Matrix()
        return ns.T if ns.rows else sympy.zeros(c, 0)
    if r == 0:
        return np.eye(c)
    _, s, vt = np.linalg.svd(M)
    k = int(np.sum(s > FLOAT_RANK_TOL * max(1.0, s[0] if s.size else 0.0)))
    return vt[k:].T.copy()


def inverse(M):
    if is_exact(M):
        D = _dm(M)
        if D.rank() < M.rows:
            raise np.linalg.LinAlgError("singular matrix")
        return D.inv().to_Matrix()
    return np.linalg.inv(M)


def transpose(M):
    return M.T


def mat_equal(A, B, tol: float = 0.0) -> bool:
    if shape(A) != shape(B):
        return False
    if is_exact(A) and is_exact(B):
        return A == B
    return bool(np.max(np.abs(to_float(A) - to_float(B)), initial=0.0) <= tol)


def omega_matrix(N: int, exact_mode: bool = True):
    """``Omega = [[0, I], [-I, 0]]`` on ``C^N``."""
    I, Z = eye(N, exact_mode), zeros(N, N, exact_mode)
    return block([[Z, I], [-I, Z]], exact_mode)


def is_symplectic(theta, tol: float = 1e-10) -> bool:
    r, c = shape(theta)
    if r != c or r % 2:
        return False
    W = omega_matrix(r // 2, is_exact(theta))
    return mat_equal(_mul(_mul(theta.T, W), theta), W, tol)


def _mul(A, B):
    if is_exact(A) and is_exact(B):
        if A.cols == 0 or A.rows == 0 or B.cols == 0:
            return sympy.zeros(A.rows, B.cols)
        return (_dm(A) * _dm(B)).to_Matrix()
    return to_float(A) @ to_float(B)


def op_norm(M) -> float:
    return float(np.linalg.norm(to_float(M), 2)) if min(shape(M)) else 0.0


# ---------------------------------------------------------------------------
# spaces and Lagrangians


@dataclass(frozen=True)
class SymplSpace:
    """``R^{2m} = C^m`` with complex structure ``J(x, y) = (-y, x)``."""

    m: int

    def J(self, exact_mode: bool = True):
        I, Z = eye(self.m, exact_mode), zeros(self.m, self.m, exact_mode)
        return block([[Z, -I], [I, Z]], exact_mode)

    def omega(self, exact_mode: bool = True):
        return omega_matrix(self.m, exact_mode)


class Lagrangian:
    """A Lagrangian subspace of ``E x C^n``, ``E = C^m``, given by a basis.

    Raises :class:`InvariantViolation` if the basis is rank deficient or not
    isotropic (exactly for rational entries, to ``1e-10`` Frobenius otherwise).
    """

    def __init__(self, basis, m: int, n: int = 0):
        B = as_matrix(basis) if not (isinstance(basis, np.ndarray) and basis.size == 0) \
            else np.zeros((2 * (m + n), 0))
        N = m + n
        if shape(B) != (2 * N, N):
            raise InputError(f"basis of shape {shape(B)} does not fit E x C^n with m={m}, n={n}")
        if rank(B) != N:
            raise InvariantViolation("Lagrangian basis is rank deficient", "def:lagrangian")
        W = omega_matrix(N, is_exact(B))
        iso = _mul(_mul(B.T, W), B)
        if is_exact(B):
            ok = iso == sympy.zeros(N, N)
        else:
            ok = float(np.linalg.norm(iso)) <= FLOAT_ISOTROPY_TOL * max(1.0, np.linalg.norm(B) ** 2)
        if not ok:
            raise InvariantViolation("basis is not isotropic", "def:lagrangian")
        self.basis = B
        self.m = m
        self.n = n

    @property
    def N(self) -> int:
        return self.m + self.n

    @property
    def exact(self) -> bool:
        return is_exact(self.basis)

    def __repr__(self) -> str:
        return f"Lagrangian(m={self.m}, n={self.n}, basis={self.basis.tolist()})"

    def to_json(self) -> dict:
        if self.exact:
            rows = [[str(e) for e in self.basis.row(i)] for i in range(self.basis.rows)]
        else:
            rows = [[float(e) for e in r] for r in self.basis]
        return {"m": self.m, "n": self.n, "basis": rows}

    @classmethod
    def from_json(cls, data) -> "Lagrangian":
        try:
            m, n = int(data["m"]), int(data.get("n", 0))
            rows = data["basis"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad Lagrangian JSON: {exc}") from exc
        if any(isinstance(e, float) for r in rows for e in r):
            return cls(np.array(rows, dtype=float), m, n)
        if not rows:
            return cls(sympy.zeros(0, 0), m, n)
        return cls(exact(rows), m, n)


def real_subspace(N: int, exact_mode: bool = True, m: int = 0) -> Lagrangian:
    """``R^N`` as a Lagrangian of ``C^m x C^(N-m)``."""
    return Lagrangian(vstack(eye(N, exact_mode), zeros(N, N, exact_mode)), m, N - m)


def imaginary_subspace(N: int, exact_mode: bool = True, m: int = 0) -> Lagrangian:
    return Lagrangian(vstack(zeros(N, N, exact_mode), eye(N, exact_mode)), m, N - m)


def graph_of_form(q: QuadForm) -> Lagrangian:
    """``{(v, grad q(v))} = span [I; 2 mat]`` in ``C^k`` (with ``E = 0``)."""
    k = q.dim
    M = exact([[2 * e for e in row] for row in q.mat]) if k else sympy.zeros(0, 0)
    return Lagrangian(vstack(sympy.eye(k), M) if k else sympy.zeros(0, 0), 0, k)


def is_transverse(a: Lagrangian, b: Lagrangian) -> bool:
    """Whether ``a`` and ``b`` span the ambient space."""
    if a.N != b.N:
        raise InputError("Lagrangians live in different ambient spaces")
    if a.N == 0:
        return True
    return rank(hstack(a.basis, b.basis)) == 2 * a.N


def subspace_equal(a, b, tol: float = 1e-8) -> bool:
    """Equality of column spans: exact by ranks, else by the largest principal angle."""
    A = a.basis if isinstance(a, Lagrangian) else a
    B = b.basis if isinstance(b, Lagrangian) else b
    if shape(A)[0] != shape(B)[0]:
        return False
    if is_exact(A) and is_exact(B):
        r = rank(A)
        return r == rank(B) == rank(hstack(A, B))
    return principal_angle(A, B) <= tol


def principal_angle(A, B) -> float:
    """Sine of the largest principal angle between two column spans of equal dimension."""
    A, B = to_float(A), to_float(B)
    if A.shape[1] == 0 and B.shape[1] == 0:
        return 0.0
    if A.shape[1] != B.shape[1]:
        return 1.0
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    resid = qb - qa @ (qa.T @ qb)
    return float(np.linalg.norm(resid, 2))


def _coiso_constraint(m: int, n: int, exact_mode: bool):
    """Rows selecting ``y_S``; ``E x R^n`` is their common kernel."""
    N = m + n
    S = zeros(n, 2 * N, exact_mode)
    for i in range(n):
        S[i, N + m + i] = 1
    return S


def is_transverse_to_coisotropic(phi: Lagrangian) -> bool:
    """Transversality of ``phi`` to ``E x R^n``: the ``y_S`` rows of the basis have full rank."""
    if phi.n == 0:
        return True
    S = _coiso_constraint(phi.m, phi.n, phi.exact)
    return rank(_mul(S, phi.basis)) == phi.n


def coisotropic_intersection(phi: Lagrangian):
    """Basis (columns) of ``phi ∩ (E x R^n)`` as vectors of ``E x C^n``."""
    if not is_transverse_to_coisotropic(phi):
        raise NotTransverse("phi is not transverse to E x R^n")
    S = _coiso_constraint(phi.m, phi.n, phi.exact)
    K = nullspace(_mul(S, phi.basis)) if phi.n else eye(phi.N, phi.exact)
    return _mul(phi.basis, K)


def _project_E(vecs, m: int, n: int):
    N = m + n
    rows = list(range(m)) + list(range(N, N + m))
    if is_exact(vecs):
        return vecs.extract(rows, list(range(vecs.cols)))
    return vecs[rows, :]


def reduce(phi: Lagrangian) -> Lagrangian:
    """Symplectic reduction: project ``phi ∩ (E x R^n)`` to ``E``."""
    K = coisotropic_intersection(phi)
    return Lagrangian(_project_E(K, phi.m, phi.n), phi.m, 0)


def _insert_stabilization(phi: Lagrangian, q: QuadForm, left: bool) -> Lagrangian:
    k = q.dim
    if k == 0:
        return phi
    m, n, N = phi.m, phi.n, phi.N
    ex_mode = phi.exact
    G = graph_of_form(q).basis
    G = _coerce(ex_mode, G)
    B = phi.basis
    M = N + k
    out = zeros(2 * M, N + k, ex_mode)
    # real rows of phi go to x_E, x_S; imaginary rows to y_E, y_S
    off = m if left else m + n
    phi_rows = [i for i in range(M) if not off <= i < off + k]
    for r_src, r_dst in enumerate(phi_rows):
        for c in range(N):
            out[r_dst, c] = B[r_src, c]
            out[M + r_dst, c] = B[N + r_src, c]
    for i in range(k):
        for c in range(k):
            out[off + i, N + c] = G[i, c]
            out[M + off + i, N + c] = G[k + i, c]
    return Lagrangian(out, m, n + k)


def left_stabilize(q: QuadForm, phi: Lagrangian) -> Lagrangian:
    """``q . phi``: the graph of ``q`` inserted directly after the ``E`` coordinates."""
    return _insert_stabilization(phi, q, left=True)


def right_stabilize(phi: Lagrangian, q: QuadForm) -> Lagrangian:
    """``phi . q``: the graph of ``q`` appended after the existing stabilization."""
    return _insert_stabilization(phi, q, left=False)


def act_on_E(theta, phi: Lagrangian) -> Lagrangian:
    """Apply ``theta ⊕ id`` (``theta`` acting on ``E``) to ``phi``."""
    theta = as_matrix(theta)
    m, n, N = phi.m, phi.n, phi.N
    if shape(theta) != (2 * m, 2 * m):
        raise InputError("theta must act on E")
    ex_mode = phi.exact and is_exact(theta)
    T = eye(2 * N, ex_mode)
    idx = list(range(m)) + list(range(N, N + m))
    for a, i in enumerate(idx):
        for b, j in enumerate(idx):
            T[i, j] = theta[a, b]
    return Lagrangian(_mul(_coerce(ex_mode, T), _coerce(ex_mode, phi.basis)), m, n)


# ---------------------------------------------------------------------------
# stable lifts


def _sym(M, exact_mode: bool):
    M = _coerce(exact_mode, M)
    return (M + M.T) / 2


class StableLift:
    """A Lagrangian of ``E x C^n`` transverse to ``V ⊕ iR^n``, as a quadratic form.

    ``form`` is the symmetric ``(m + n) x (m + n)`` matrix of ``phi(h, v)`` on
    ``H x R^n``; ``phi`` is the graph ``{(h, v; grad phi)}``.  The form may be
    degenerate: a zero form on ``H`` is the Lagrangian ``H`` itself.
    """

    def __init__(self, form, m: int, n: int = 0):
        F = as_matrix(form) if not (hasattr(form, "__len__") and len(form) == 0) \
            else sympy.zeros(0, 0)
        if shape(F) != (m + n, m + n):
            raise InputError(f"form of shape {shape(F)} does not match m={m}, n={n}")
        if not mat_equal(F, F.T, 1e-12):
            raise InputError("form matrix must be symmetric")
        self.form = F
        self.m = m
        self.n = n

    @classmethod
    def from_quadform(cls, q: QuadForm, m: int) -> "StableLift":
        return cls(exact([list(r) for r in q.mat]) if q.dim else sympy.zeros(0, 0), m, q.dim - m)

    @property
    def exact(self) -> bool:
        return is_exact(self.form)

    @property
    def N(self) -> int:
        return self.m + self.n

    def lagrangian(self) -> Lagrangian:
        ex_mode = self.exact
        return Lagrangian(vstack(eye(self.N, ex_mode), 2 * self.form), self.m, self.n)

    def __call__(self, point) -> float:
        p = to_float(self.form) @ np.asarray(point, float)
        return float(np.asarray(point, float) @ p)

    def right(self, q: QuadForm) -> "StableLift":
        """``phi . q = phi ⊕ q`` with ``q`` on new trailing coordinates."""
        if q.dim == 0:
            return self
        Q = _coerce(self.exact, exact([list(r) for r in q.mat]))
        F = block([[self.form, zeros(self.N, q.dim, self.exact)],
                   [zeros(q.dim, self.N, self.exact), Q]], self.exact)
        return StableLift(F, self.m, self.n + q.dim)

    def left(self, q: QuadForm) -> "StableLift":
        """``q . phi``: ``q`` on new coordinates placed right after the base ``H``."""
        if q.dim == 0:
            return self
        ex_mode = self.exact
        k, m, n = q.dim, self.m, self.n
        Q = _coerce(ex_mode, exact([list(r) for r in q.mat]))
        F = zeros(m + k + n, m + k + n, ex_mode)
        old = list(range(m)) + list(range(m + k, m + k + n))
        for a, i in enumerate(old):
            for b, j in enumerate(old):
                F[i, j] = self.form[a, b]
        for a in range(k):
            for b in range(k):
                F[m + a, m + b] = Q[a, b]
        return StableLift(F, m, n + k)

    def equals(self, other: "StableLift", tol: float = 0.0) -> bool:
        return self.m == other.m and self.n == other.n and mat_equal(self.form, other.form, tol)

    def to_json(self) -> dict:
        if self.exact:
            rows = [[str(e) for e in self.form.row(i)] for i in range(self.form.rows)]
        else:
            rows = [[float(e) for e in r] for r in self.form]
        return {"m": self.m, "n": self.n, "form": rows}

    @classmethod
    def from_json(cls, data) -> "StableLift":
        try:
            m, n = int(data["m"]), int(data.get("n", 0))
            rows = data["form"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad StableLift JSON: {exc}") from exc
        if any(isinstance(e, float) for r in rows for e in r):
            return cls(np.array(rows, dtype=float), m, n)
        return cls(exact(rows) if rows else sympy.zeros(0, 0), m, n)

    def __repr__(self) -> str:
        return f"StableLift(m={self.m}, n={self.n}, form={self.form.tolist()})"


def H_subspace(m: int, exact_mode: bool = True) -> Lagrangian:
    """The fixed complement ``H = R^m`` of ``V = iR^m`` in ``E``."""
    return real_subspace(m, exact_mode, m)


def fiber_retract(phi: StableLift, t) -> StableLift:
    """``phi_t(h, v) = phi(t h, v)``; requires ``reduce(phi) = H``."""
    if not subspace_equal(reduce(phi.lagrangian()), H_subspace(phi.m, phi.exact)):
        raise NotInFiber("reduce(phi) differs from H")
    m = phi.m
    if phi.exact:
        tt = _rational(t)
    else:
        tt = float(t)
    F = phi.form.copy()
    N = phi.N
    for i in range(N):
        for j in range(N):
            s = (tt if i < m else 1) * (tt if j < m else 1)
            F[i, j] = F[i, j] * s
    return StableLift(F, m, phi.n)


# ---------------------------------------------------------------------------
# path lifting


def s_theta(theta):
    """Symmetric matrix of ``S^theta`` on ``(x_1, x_2) in R^m x R^m``.

    It is characterized by
    ``theta^{-1}(x_1 + i dS/dx_1) = dS/dx_2 + i x_2``.  Writing
    ``theta^{-1} = [[a, b], [c, d]]`` the gradient of ``S`` is the linear map
    ``(x_1, x_2) -> (d^{-1}(x_2 - c x_1), a x_1 + b d^{-1}(x_2 - c x_1))``, which
    exists iff ``d`` is invertible.  Raises :class:`NotGraphical` otherwise.
    """
    theta = as_matrix(theta)
    r, c = shape(theta)
    if r != c or r % 2:
        raise InputError("theta must be a square matrix of even size")
    if not is_symplectic(theta):
        raise InputError("theta is not symplectic")
    m = r // 2
    ex_mode = is_exact(theta)
    ti = inverse(theta)
    if ex_mode:
        a, b = ti[:m, :m], ti[:m, m:]
        cc, d = ti[m:, :m], ti[m:, m:]
        if rank(d) < m:
            raise NotGraphical("graph of theta^-1 is not graphical over (x_1, x_2)")
        di = inverse(d)
    else:
        a, b, cc, d = ti[:m, :m], ti[:m, m:], ti[m:, :m], ti[m:, m:]
        if np.linalg.cond(d) > 1e8:
            raise NotGraphical("graph of theta^-1 is not graphical over (x_1, x_2)")
        di = np.linalg.inv(d)
    G = block([[-_mul(di, cc), di], [a - _mul(_mul(b, di), cc), _mul(b, di)]], ex_mode)
    return _sym(G, ex_mode) / 2


def s_theta_residual(theta, points) -> float:
    """Max residual of the defining identity of ``S^theta`` at the given ``(x_1, x_2)``."""
    theta = to_float(as_matrix(theta))
    m = theta.shape[0] // 2
    S = to_float(s_theta(theta))
    ti = np.linalg.inv(theta)
    worst = 0.0
    for p in np.atleast_2d(points):
        grad = 2 * S @ p
        x1, x2 = p[:m], p[m:]
        lhs = ti @ np.concatenate([x1, grad[:m]])
        rhs = np.concatenate([grad[m:], x2])
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def interleave_lift_coordinates(m: int, n: int) -> list[int]:
    """Order ``(x_1, x_2[0], x_3[0], ..., x_2[m-1], x_3[m-1], v)`` as indices into
    the block order ``(x_1, x_2, x_3, v)``.

    This is the fixed reordering under which the identity step is literally
    ``h^m . phi``.
    """
    order = list(range(m))
    for i in range(m):
        order += [m + i, 2 * m + i]
    order += list(range(3 * m, 3 * m + n))
    return order


def lift_step(phi: StableLift, theta) -> StableLift:
    """One lifting step ``phi -> phi^theta`` (stabilization grows by ``2m``).

    ``phi'(X_1, X_2, X_3, v) = phi(X_3, v) + S^theta(X_1, X_2) - <X_3, X_2>`` is
    pulled back along ``X_1 = x_1``, ``X_3 = x_1 - x_3``,
    ``X_2 = x_2 + f(X_1, X_3, v)`` with ``f = A (X_1 + X_3) + 2 B v`` for the
    blocks ``phi = [[A, B], [B^T, C]]``; this solves
    ``<f, X_1 - X_3> = phi(X_1, v) - phi(X_3, v)``.  The result is then put in
    the interleaved coordinate order of :func:`interleave_lift_coordinates`.
    """
    theta = as_matrix(theta)
    m, n = phi.m, phi.n
    if shape(theta) != (2 * m, 2 * m):
        raise InputError("theta must act on E = C^m")
    ex_mode = phi.exact and is_exact(theta)
    F = _coerce(ex_mode, phi.form)
    S = _coerce(ex_mode, s_theta(theta))
    A, B, C = F[:m, :m], F[:m, m:], F[m:, m:]
    D = 3 * m + n
    Mp = zeros(D, D, ex_mode)

    def put(r0, c0, blk):
        rr, cc_ = shape(blk)
        for i in range(rr):
            for j in range(cc_):
                Mp[r0 + i, c0 + j] += blk[i, j]

    X1, X2, X3, V = 0, m, 2 * m, 3 * m
    put(X3, X3, A)
    put(X3, V, B)
    put(V, X3, B.T)
    put(V, V, C)
    put(X1, X1, S[:m, :m])
    put(X1, X2, S[:m, m:])
    put(X2, X1, S[m:, :m])
    put(X2, X2, S[m:, m:])
    half = eye(m, ex_mode) / 2
    put(X3, X2, -half)
    put(X2, X3, -half)
    # T maps (x1, x2, x3, v) to (X1, X2, X3, v)
    T = zeros(D, D, ex_mode)
    I = eye(m, ex_mode)
    put_T = lambda r0, c0, blk: [T.__setitem__((r0 + i, c0 + j), T[r0 + i, c0 + j] + blk[i, j])
                                 for i in range(shape(blk)[0]) for j in range(shape(blk)[1])]
    put_T(X1, X1, I)
    put_T(X2, X2, I)
    put_T(X2, X1, 2 * A)
    put_T(X2, X3, -A)
    put_T(X2, V, 2 * B)
    put_T(X3, X1, I)
    put_T(X3, X3, -I)
    put_T(V, V, eye(n, ex_mode))
    Mt = _mul(_mul(T.T, Mp), T)
    order = interleave_lift_coordinates(m, n)
    if ex_mode:
        out = Mt.extract(order, order)
    else:
        out = Mt[np.ix_(order, order)]
        out = (out + out.T) / 2
    return StableLift(out, m, n + 2 * m)


@dataclass
class SymplPath:
    """Samples ``theta_{t_k}`` of a path of symplectic matrices with ``theta_0 = I``."""

    times: Sequence[float]
    samples: Sequence

    def __post_init__(self):
        self.samples = [as_matrix(s) for s in self.samples]
        self.times = [float(t) for t in self.times]
        if len(self.times) != len(self.samples) or not self.samples:
            raise InputError("times and samples must have the same non-zero length")
        if abs(self.times[0]) > 0 or abs(self.times[-1] - 1.0) > 1e-15 \
                or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InputError("times must increase from 0 to 1")
        d = shape(self.samples[0])[0]
        if not mat_equal(self.samples[0], eye(d, is_exact(self.samples[0])), 1e-12):
            raise InputError("path must start at the identity")
        for s in self.samples:
            if not is_symplectic(s, 1e-10):
                raise InputError("path sample is not symplectic")

    @property
    def K(self) -> int:
        return len(self.samples) - 1

    @property
    def m(self) -> int:
        return shape(self.samples[0])[0] // 2

    def factors(self) -> list:
        """``delta_k = theta_{t_k} theta_{t_{k-1}}^{-1}`` for ``k = 1..K``."""
        return [_mul(self.samples[k], inverse(self.samples[k - 1])) for k in range(1, len(self.samples))]

    @classmethod
    def from_function(cls, func: Callable[[float], np.ndarray], K: int) -> "SymplPath":
        times = [k / K for k in range(K + 1)]
        return cls(times, [np.asarray(func(t), dtype=float) for t in times])

    def to_json(self) -> dict:
        return {"times": list(self.times),
                "samples": [[[float(e) for e in row] for row in to_float(s)] for s in self.samples]}

    @classmethod
    def from_json(cls, data) -> "SymplPath":
        try:
            samples = [np.array(s, dtype=float) if any(isinstance(e, float) for r in s for e in r)
                       else exact(s) for s in data["samples"]]
            times = data.get("times") or [k / (len(samples) - 1) for k in range(len(samples))]
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise InputError(f"bad path JSON: {exc}") from exc
        return cls(times, samples)


def rotation(angle: float) -> np.ndarray:
    """Rotation of ``C^1`` by ``angle`` in ``Sp_2``."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def resample_path(func: Callable[[float], np.ndarray], radius: float = DEFAULT_RADIUS,
                  K: int = 1, max_K: int = 4096) -> SymplPath:
    """Double the sample count until every factor is within ``radius`` of ``I``."""
    while K <= max_K:
        path = SymplPath.from_function(func, K)
        if all(op_norm(f - np.eye(f.shape[0])) < radius for f in path.factors()):
            return path
        K *= 2
    raise StepTooLarge(f"no resampling with at most {max_K} factors stays within {radius}")


def lift_path(phi0: StableLift, path: SymplPath, radius: float = DEFAULT_RADIUS
              ) -> list[StableLift]:
    """Lifts ``Theta_{t_k}(phi0)`` for all samples, with ``N = mK`` stabilizations.

    The sampled path is written as the product of the factors
    ``delta_K ... delta_1``; at sample ``t_k`` the first ``k`` factors are
    applied and the rest are the identity.  Since an identity step is exactly
    left stabilization by ``h^m``, the lift at ``t_k`` is
    ``h^{m(K-k)} . (delta_k ... delta_1 step lifts of phi0)``.  Raises
    :class:`StepTooLarge` if a factor is at least ``radius`` away from ``I``.
    """
    from .quadform import hyperbolic

    if path.m != phi0.m:
        raise InputError("path and lift act on different E")
    factors = path.factors()
    for k, f in enumerate(factors, start=1):
        dist = op_norm(to_float(f) - np.eye(2 * path.m))
        if dist >= radius:
            raise StepTooLarge(f"factor {k} is {dist:.3f} from the identity (radius {radius})")
    K, m = path.K, path.m
    prefix = [phi0]
    for f in factors:
        prefix.append(lift_step(prefix[-1], f))
    out = []
    for k in range(K + 1):
        lift = prefix[k]
        pad = m * (K - k)
        if pad:
            lift = lift.left(hyperbolic(pad))
        out.append(lift)
    return out


# ---------------------------------------------------------------------------
# the P^m action and compatibility


def p_matrix(a, b, m_E: int):
    """``A~`` for ``A = [[id, 0], [a, b]]``: the cotangent lift of ``(h, s) -> (h, a h + b s)``.

    In the coordinates ``(x_E, x_S, y_E, y_S)``:
    ``x_S' = a x_E + b x_S``, ``y_E' = y_E - a^T b^{-T} y_S``, ``y_S' = b^{-T} y_S``.
    """
    a, b = as_matrix(a), as_matrix(b)
    m = shape(b)[0]
    if shape(b) != (m, m) or shape(a) != (m, m_E):
        raise InputError("a must be m x m_E and b must be m x m")
    ex_mode = is_exact(a) and is_exact(b)
    a, b = _coerce(ex_mode, a), _coerce(ex_mode, b)
    try:
        bi = inverse(b)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularB("b is not invertible") from exc
    if not ex_mode and np.linalg.cond(b) > 1e12:
        raise SingularB("b is not invertible")
    bit = bi.T
    L = block([[eye(m_E, ex_mode), zeros(m_E, m, ex_mode)], [a, b]], ex_mode)
    Lit = block([[eye(m_E, ex_mode), -_mul(a.T, bit)], [zeros(m, m_E, ex_mode), bit]], ex_mode)
    N = m_E + m
    return block([[L, zeros(N, N, ex_mode)], [zeros(N, N, ex_mode), Lit]], ex_mode)


def p_action(a, b, phi: Lagrangian) -> Lagrangian:
    """``A~(phi)`` for ``phi`` in ``E x C^m``."""
    At = p_matrix(a, b, phi.m)
    if shape(At)[0] != 2 * phi.N:
        raise InputError("stabilization dimension of phi does not match b")
    ex_mode = phi.exact and is_exact(At)
    return Lagrangian(_mul(_coerce(ex_mode, At), _coerce(ex_mode, phi.basis)), phi.m, phi.n)


def p_compose(A1: tuple, A2: tuple) -> tuple:
    """``(a1, b1)(a2, b2) = (a1 + b1 a2, b1 b2)`` in the block form of ``P^m``."""
    (a1, b1), (a2, b2) = [tuple(as_matrix(x) for x in A) for A in (A1, A2)]
    return (a1 + _mul(b1, a2), _mul(b1, b2))


def monomorphism(phi: Lagrangian, rho_basis=None):
    """``u_phi``: ``rho(phi) ≅ phi ∩ (E x R^n) -> E/V x R^n`` as a matrix.

    Columns correspond to the columns of ``rho_basis`` (a basis of
    ``reduce(phi)``; the one computed by :func:`reduce` if omitted).  Each
    column is the ``(x_E, x_S)`` part of the unique vector of ``phi ∩ (E x R^n)``
    projecting to the given vector of ``E``.
    """
    K = coisotropic_intersection(phi)
    P = _project_E(K, phi.m, phi.n)
    R = P if rho_basis is None else as_matrix(rho_basis)
    ex_mode = is_exact(K) and is_exact(R)
    K, P, R = _coerce(ex_mode, K), _coerce(ex_mode, P), _coerce(ex_mode, R)
    if ex_mode:
        coeff = _mul(_mul(inverse(_mul(P.T, P)), P.T), R)
        if _mul(P, coeff) != R:
            raise InputError("rho_basis is not contained in reduce(phi)")
        X = _mul(K, coeff)
        return X.extract(list(range(phi.N)), list(range(X.cols)))
    coeff, *_ = np.linalg.lstsq(P, R, rcond=None)
    if np.max(np.abs(P @ coeff - R), initial=0.0) > 1e-8:
        raise InputError("rho_basis is not contained in reduce(phi)")
    return (K @ coeff)[:phi.N, :]


def _left_inverse_projection(U):
    """``p`` with ``p u = id``: orthogonal projection onto ``im U`` followed by ``U^{-1}``."""
    if rank(U) != shape(U)[1]:
        raise RankDeficient("monomorphism is not injective")
    if is_exact(U):
        return _mul(inverse(_mul(U.T, U)), U.T)
    return np.linalg.solve(U.T @ U, U.T)


@dataclass
class Normalized:
    a: object
    b: object
    phi: Lagrangian

    @property
    def matrix(self):
        ex_mode = is_exact(self.a)
        m_E = shape(self.a)[1]
        return block([[eye(m_E, ex_mode), zeros(m_E, shape(self.b)[0], ex_mode)],
                      [self.a, self.b]], ex_mode)


def compatibility_matrix(u, target, m_E: int):
    """``A = C^{-1} B`` with ``A u = target`` for monomorphisms with equal ``E/V`` part.

    ``B = id + (0 x (target - u)_S) p`` with ``p`` the left inverse of ``u``
    through the orthogonal projection onto ``im u``, and
    ``C = id + (0 x u_S) q`` with ``q`` the same for ``target``, where the
    subscript ``S`` is the part in the stabilization coordinates.  When the
    stabilization part of ``target`` is ``(v, 0)`` and that of ``u`` is
    ``(0, v_phi)`` this is the classical construction.
    """
    u, target = as_matrix(u), as_matrix(target)
    ex_mode = is_exact(u) and is_exact(target)
    u, target = _coerce(ex_mode, u), _coerce(ex_mode, target)
    D = shape(u)[0]
    if shape(target) != shape(u):
        raise InputError("monomorphisms have different shapes")
    if not mat_equal(u[:m_E, :], target[:m_E, :], 1e-12):
        raise InputError("monomorphisms must agree on E/V")
    p = _left_inverse_projection(u)
    q = _left_inverse_projection(target)
    ts, us = target.copy(), u.copy()
    for i in range(m_E):
        for j in range(shape(u)[1]):
            ts[i, j] = 0
            us[i, j] = 0
    # target_S still holds the E/V-free part of the target; lift it over u
    Bm = eye(D, ex_mode) + _mul(ts, p)
    Cm = eye(D, ex_mode) + _mul(us, q)
    try:
        Ci = inverse(Cm)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RankDeficient("C is not invertible") from exc
    A = _mul(Ci, Bm)
    return A


def compatibility_normalize(phis: Sequence[Lagrangian], k: int, v, rho_basis=None
                            ) -> list[Normalized]:
    """Move each ``phi_i`` by ``P^{k+n_i}`` so that ``u_{phi_i'} = (Pi, v, 0)``.

    ``v`` is the ``k x dim`` matrix of the prescribed map to ``R^k`` padded by
    zeros over the remaining ``n_i - k`` stabilization coordinates; ``Pi`` is the
    ``E/V`` part of ``u_{phi_i}``.  Returns ``(a_i, b_i, phi_i')`` per lift.
    Raises :class:`RankDeficient` if some ``u_{phi_i}`` is not injective.
    """
    out = []
    v = as_matrix(v)
    for phi in phis:
        if phi.n < k:
            raise InputError("each lift needs at least k stabilization coordinates")
        u = monomorphism(phi, rho_basis)
        ex_mode = is_exact(u) and is_exact(v)
        u = _coerce(ex_mode, u)
        cols = shape(u)[1]
        if shape(v) != (k, cols):
            raise InputError(f"v must be {k} x {cols}")
        if rank(u) != cols:
            raise RankDeficient("u_phi is not injective")
        target = vstack(u[:phi.m, :], _coerce(ex_mode, v), zeros(phi.n - k, cols, ex_mode))
        A = compatibility_matrix(u, target, phi.m)
        m_E = phi.m
        a, b = A[m_E:, :m_E], A[m_E:, m_E:]
        out.append(Normalized(a, b, p_action(a, b, phi)))
    return out


def rational_rotation(u) -> sympy.Matrix:
    """Exact rotation of ``C^1`` with ``cos = (1 - u^2)/(1 + u^2)``, ``sin = 2u/(1 + u^2)``.

    ``u = tan(angle / 2)``; ``u = None`` gives the rotation by ``pi``.
    """
    if u is None:
        return -sympy.eye(2)
    u = _rational(u)
    c, s = (1 - u ** 2) / (1 + u ** 2), 2 * u / (1 + u ** 2)
    return sympy.Matrix([[c, -s], [s, c]])


def rational_rotation_path(total_angle: float, K: int, max_denominator: int = 1000) -> SymplPath:
    """Exact samples of the rotation path ``t -> R(t * total_angle)`` at ``t = k/K``.

    Each sample uses a rational approximation of ``tan(t * total_angle / 2)``;
    a half turn maps to ``-I`` exactly.
    """
    samples = []
    for k in range(K + 1):
        half = k * total_angle / (2 * K)
        if abs(abs(half) - np.pi / 2) < 1e-12:
            samples.append(rational_rotation(None))
        else:
            samples.append(rational_rotation(Fraction(np.tan(half)).limit_denominator(max_denominator)))
    samples[0] = sympy.eye(2)
    return SymplPath([k / K for k in range(K + 1)], samples)
