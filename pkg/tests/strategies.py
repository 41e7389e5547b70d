"""Random generators of test inputs shared across test modules."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import sympy
from hypothesis import strategies as st

from gfcalc.quadform import QuadForm, det
from gfcalc.symplin import StableLift, is_symplectic, rational_rotation

small_fractions = st.fractions(min_value=-3, max_value=3, max_denominator=4)


@st.composite
def quad_forms(draw, min_dim: int = 0, max_dim: int = 3) -> QuadForm:
    """Random non-degenerate symmetric forms with small rational entries."""
    n = draw(st.integers(min_dim, max_dim))
    rows = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            rows[i][j] = rows[j][i] = draw(small_fractions)
    if n and det(rows) == 0:
        for i in range(n):
            rows[i][i] += 7
        if det(rows) == 0:
            rows = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    return QuadForm(rows)


def random_form(rng: np.random.Generator, n: int) -> QuadForm:
    """Random non-degenerate form drawn from a numpy generator."""
    while True:
        a = rng.integers(-4, 5, size=(n, n))
        rows = [[Fraction(int(a[i][j] + a[j][i]), 2) for j in range(n)] for i in range(n)]
        if n == 0 or det(rows) != 0:
            return QuadForm(rows)


def random_lift(rng, m: int, n: int, exact_mode: bool = True) -> StableLift:
    while True:
        A = rng.integers(-3, 4, size=(m + n, m + n))
        F = [[Fraction(int(A[i][j] + A[j][i]), 2) for j in range(m + n)] for i in range(m + n)]
        fiber = np.array([[float(F[i][j]) for j in range(m, m + n)] for i in range(m, m + n)])
        if n == 0 or abs(np.linalg.det(fiber)) > 0.5:
            if exact_mode:
                return StableLift(sympy.Matrix(F), m, n)
            return StableLift(np.array(F, dtype=float), m, n)


def rational_symplectic(rng, m: int) -> sympy.Matrix:
    """An exact symplectic matrix close to the identity, built from shears and rotations."""
    T = sympy.eye(2 * m)
    for i in range(m):
        for j in range(m):
            s = sympy.Rational(int(rng.integers(-2, 3)), 100)
            sym = sympy.zeros(m, m)
            sym[i, j] += s
            sym[j, i] += s
            shear = sympy.eye(2 * m)
            shear[m:, :m] = sym
            T = T * shear
    R = sympy.eye(2 * m)
    R[:1, :1] = rational_rotation(Fraction(1, 40))[:1, :1]
    R[0, m], R[m, 0] = rational_rotation(Fraction(1, 40))[0, 1], rational_rotation(Fraction(1, 40))[1, 0]
    R[m, m] = rational_rotation(Fraction(1, 40))[1, 1]
    T = T * R
    assert is_symplectic(T)
    return T


def random_p_element(rng, m_E: int, m: int):
    while True:
        a = sympy.Matrix(m, m_E, lambda i, j: int(rng.integers(-3, 4)))
        b = sympy.Matrix(m, m, lambda i, j: int(rng.integers(-3, 4)))
        if b.det() != 0:
            return a, b
