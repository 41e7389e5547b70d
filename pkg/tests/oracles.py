"""Independent numerical oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math

import numpy as np

from gfcalc import expr as ex
from gfcalc.homalg import GradedAbGroup, cyclic, int_det, smith_normal_form


def plain_critical(e: ex.Expr, coords, box) -> list[tuple[tuple[float, ...], float]]:
    """Oracle: Newton from a dense seed grid, without the adaptive pruning."""
    axes = [np.linspace(lo, hi, 9) for lo, hi in box]
    seeds = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(box), -1).T
    found = []
    for p in seeds:
        for _ in range(60):
            J = ex.jet(e, coords, p[None, :])
            if np.linalg.norm(J.grad[0]) < 1e-12:
                break
            try:
                p = p - np.linalg.solve(J.hess[0], J.grad[0])
            except np.linalg.LinAlgError:
                break
            if np.any(np.abs(p) > 100):
                break
        J = ex.jet(e, coords, p[None, :])
        inside = all(lo - 1e-9 <= c <= hi + 1e-9 for c, (lo, hi) in zip(p, box))
        if inside and np.linalg.norm(J.grad[0]) < 1e-9:
            if not any(np.linalg.norm(p - np.array(q)) < 1e-6 for q, _ in found):
                found.append((tuple(p), float(J.val[0])))
    return sorted(found)


def crit_summary(points) -> list[tuple[tuple[float, ...], float]]:
    return sorted((c.location, c.value) for c in points)


def assert_same_critical_sets(a, b, tol=1e-8):
    assert len(a) == len(b)
    for (la, va), (lb, vb) in zip(sorted(a), sorted(b)):
        assert np.max(np.abs(np.array(la) - np.array(lb))) < tol
        assert abs(va - vb) < tol


def determinantal_factors(M: list[list[int]]) -> list[int]:
    """Independent oracle: invariant factors d_k / d_{k-1} from gcds of k x k minors."""
    m, n = len(M), len(M[0]) if M else 0
    divisors = [1]
    for k in range(1, min(m, n) + 1):
        g = 0
        for rows in itertools.combinations(range(m), k):
            for cols in itertools.combinations(range(n), k):
                sub = [[M[i][j] for j in cols] for i in rows]
                g = math.gcd(g, int(round(np.linalg.det(np.array(sub, dtype=float)))))
        if g == 0:
            break
        divisors.append(g)
    return [divisors[k] // divisors[k - 1] for k in range(1, len(divisors))]


def matmul(A, B):
    return (np.array(A, dtype=object) @ np.array(B, dtype=object)).tolist()


def check_snf(M):
    U, D, V = smith_normal_form(M)
    assert matmul(matmul(U, M), V) == D
    assert abs(int_det(U)) == 1 and abs(int_det(V)) == 1
    diag = [D[i][i] for i in range(min(len(D), len(D[0])))]
    for i in range(len(D)):
        for j in range(len(D[0])):
            if i != j:
                assert D[i][j] == 0
    nonzero = [d for d in diag if d]
    assert all(d > 0 for d in nonzero)
    assert all(nonzero[i + 1] % nonzero[i] == 0 for i in range(len(nonzero) - 1))
    assert diag[len(nonzero):] == [0] * (len(diag) - len(nonzero))
    return nonzero


# detection cases with known answers
DETECTION_LIBRARY = [
    # (A, B, primes, expected)
    (cyclic(0, 2), cyclic(0, -2), [2, 3], 2),
    (GradedAbGroup({0: 1, 1: (0, [3])}), cyclic(0), [2, 3], None),
    (cyclic(2), cyclic(2), [3], None),  # Z/2 (x)^L Z/2 spreads over two degrees
    (cyclic(0, -1), cyclic(0, 4), [2], -1),
    (GradedAbGroup({0: 1, 1: 1}), cyclic(0), [2, 3], None),  # free part of rank two
    (GradedAbGroup({0: 2}), cyclic(0, 1), [5], None),
    (GradedAbGroup({3: 1}), GradedAbGroup({0: 1}), [7], 3),
    (GradedAbGroup({0: (1, [2])}), cyclic(0), [3], None),  # torsion seen mod 2
    (cyclic(0), GradedAbGroup({0: 1, 2: 1}), [2], None),  # B of rank two
    (GradedAbGroup(), cyclic(0), [2], None),  # zero complex
]


def kernel_monomorphism(basis: np.ndarray, m: int, n: int, rho: np.ndarray) -> np.ndarray:
    """Oracle for ``u_phi``: the x-part of the intersection vector over each rho column."""
    N = m + n
    B = np.asarray(basis, dtype=float)
    _, s, vt = np.linalg.svd(B[N + m:, :]) if n else (None, np.zeros(0), np.eye(N))
    null = vt[int((s > 1e-10).sum()):].T if n else np.eye(N)
    K = B @ null
    P = K[list(range(m)) + list(range(N, N + m)), :]
    coeff, *_ = np.linalg.lstsq(P, np.asarray(rho, float), rcond=None)
    return (K @ coeff)[:N, :]


def z_in(*degrees: int) -> GradedAbGroup:
    out: dict[int, int] = {}
    for d in degrees:
        out[d] = out.get(d, 0) + 1
    return GradedAbGroup(out)


# textbook homology of the spaces in the cover library
KNOWN_HOMOLOGY = {
    "interval-2arcs": z_in(0),
    "circle-3arcs": z_in(0, 1),
    "circle-3arcs-fine": z_in(0, 1),
    "triangle-stars": z_in(0),
    "annulus-stars": z_in(0, 1),
    "torus-stars": z_in(0, 1, 1, 2),
}
