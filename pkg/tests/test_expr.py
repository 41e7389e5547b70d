from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfcalc import expr as ex
from gfcalc.errors import InputError


def fd_gradient_hessian(e: ex.Expr, names, p: np.ndarray, h: float = 1e-4):
    """Central finite differences of values only, as an oracle for the jets."""
    d = len(names)

    def f(q):
        return float(ex.evaluate(e, names, q[None, :])[0])

    grad = np.array([(f(p + h * u) - f(p - h * u)) / (2 * h) for u in np.eye(d)])
    hess = np.empty((d, d))
    for i, a in enumerate(np.eye(d)):
        for j, b in enumerate(np.eye(d)):
            hess[i, j] = (f(p + h * a + h * b) - f(p + h * a - h * b)
                          - f(p - h * a + h * b) + f(p - h * a - h * b)) / (4 * h * h)
    return grad, hess


def test_d_profile_shape():
    s = np.array([-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
    assert np.allclose(ex.d_profile(s), [-3, -2, 2, 0, -2, 2, 3])
    assert np.allclose(ex.d_profile_prime(np.array([-1.0, 1.0, 2.5])), [0, 0, 1])
    grid = np.linspace(-4, 4, 8001)
    assert np.allclose(ex.d_profile(-grid), -ex.d_profile(grid))
    crit = grid[np.abs(ex.d_profile_prime(grid)) < 1e-12]
    assert set(np.round(crit, 6)) == {-1.0, 1.0}


@pytest.mark.parametrize("knot", [1.0, 2.0])
def test_d_profile_is_c2_at_knots(knot):
    for f in (ex.d_profile, ex.d_profile_prime, ex.d_profile_second):
        left, right = f(knot - 1e-9), f(knot + 1e-9)
        assert abs(left - right) < 1e-6


def test_profile_derivatives_match_finite_differences():
    s = np.linspace(-3.5, 3.5, 701) + 1e-3
    h = 1e-6
    for f0, f1, f2 in ex.FUNCTIONS.values():
        if f0 is ex.FUNCTIONS["iszero"][0]:
            continue
        assert np.allclose((f0(s + h) - f0(s - h)) / (2 * h), f1(s), atol=1e-5)
        assert np.allclose((f1(s + h) - f1(s - h)) / (2 * h), f2(s), atol=1e-4)


SAMPLE_EXPRESSIONS = [
    "x^3 - 3*x*y + 1/2",
    "D(x*y - 1/2) * psi(x) + x^3/(2 + y^2)",
    "psi(2*x - y)^2 - D(y)",
    "(x + 1)^(-2) + y",
]


@pytest.mark.parametrize("text", SAMPLE_EXPRESSIONS)
def test_jet_matches_finite_differences(text):
    e = ex.parse(text)
    names = ["x", "y"]
    rng = np.random.default_rng(len(text))
    pts = rng.uniform(-1.8, 1.8, size=(25, 2))
    pts[:, 0] = np.where(np.abs(pts[:, 0] + 1) < 0.3, 0.5, pts[:, 0])
    J = ex.jet(e, names, pts)
    assert np.allclose(J.val, ex.evaluate(e, names, pts))
    for k, p in enumerate(pts):
        g, H = fd_gradient_hessian(e, names, p)
        assert np.allclose(J.grad[k], g, atol=1e-6)
        assert np.allclose(J.hess[k], H, atol=1e-4)
        assert np.allclose(J.hess[k], J.hess[k].T)


coeffs = st.integers(-3, 3)


@given(st.lists(st.tuples(coeffs, st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=5))
def test_polynomial_jets_match_exact_derivatives(terms):
    x, y = ex.var("x"), ex.var("y")
    e = ex.add(*[ex.mul(ex.const(c), x ** i, y ** j) for c, i, j in terms])
    p = np.array([[0.7, -1.3]])
    J = ex.jet(e, ["x", "y"], p)
    px, py = p[0]
    gx = sum(c * i * px ** max(i - 1, 0) * py ** j for c, i, j in terms)
    gy = sum(c * j * px ** i * py ** max(j - 1, 0) for c, i, j in terms)
    hxy = sum(c * i * j * px ** max(i - 1, 0) * py ** max(j - 1, 0) for c, i, j in terms)
    assert J.grad[0] == pytest.approx([gx, gy], abs=1e-9)
    assert J.hess[0, 0, 1] == pytest.approx(hxy, abs=1e-9)


def test_fixed_variables_are_not_differentiated():
    e = ex.parse("a * x^2")
    J = ex.jet(e, ["x"], np.array([[2.0]]), fixed={"a": 3.0})
    assert J.val[0] == 12.0 and J.grad[0, 0] == 12.0 and J.hess[0, 0, 0] == 6.0


def test_constants_fold_and_print():
    assert str(ex.parse("w + 3/2*v_1^2")) == "w + (3/2)*v_1^2"
    assert ex.is_zero(ex.parse("0*x")) and not ex.is_zero(ex.parse("x"))
    assert ex.parse("2*3") == ex.const(6)
    assert ex.mul(ex.const(0), ex.var("x")) == ex.ZERO
    assert ex.parse("x^2").variables() == frozenset({"x"})


@pytest.mark.parametrize("text", SAMPLE_EXPRESSIONS + ["-(x - y)", "iszero(x) + 1", "x/(y/2)"])
def test_print_parse_round_trip(text):
    e = ex.parse(text)
    again = ex.parse(str(e))
    pts = np.array([[0.3, 1.1], [-0.4, 0.9], [0.0, 1.7]])
    assert np.allclose(ex.evaluate(e, ["x", "y"], pts), ex.evaluate(again, ["x", "y"], pts))


def test_substitute():
    e = ex.parse("x + 2*y")
    s = e.substitute({"y": ex.parse("x^2")})
    assert s.variables() == frozenset({"x"})
    assert ex.evaluate(s, ["x"], np.array([[2.0]]))[0] == 10.0


@pytest.mark.parametrize("text", ["x^(1/2)", "1/0", "foo(x)", "x +", "x[0]", "x < y", "f(x, y)"])
def test_parse_rejects_bad_input(text):
    with pytest.raises(InputError):
        ex.parse(text)


def test_iszero_indicator():
    e = ex.parse("iszero(x)")
    assert list(ex.evaluate(e, ["x"], np.array([[0.0], [1e-300], [2.0]]))) == [1.0, 0.0, 0.0]
