"""Expression trees with vectorized second-order forward-mode differentiation.

Expressions are built from rational constants, named variables, ``+ - * /``,
integer powers and a few fixed one-variable functions:

* ``D(s)``: the odd C^2 profile with critical points at ``s = +-1``
  (``D(s) = s^3 - 3s`` on ``|s| <= 1`` and ``D(s) = s`` on ``|s| >= 2``);
* ``psi(s)``: the cut-off profile of :mod:`gfcalc.quadform`;
* ``iszero(s)``: 1 at ``s == 0`` and 0 elsewhere, with zero derivatives.

Evaluation works on numpy arrays (values only) or on :class:`Jet` objects that
carry value, gradient and Hessian for a batch of points.
"""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import InputError
from .quadform import DEFAULT_PROFILE, as_fraction, fraction_str

Number = Union[int, float, Fraction]


# ---------------------------------------------------------------------------
# one-variable profiles with first and second derivatives


def d_profile(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    t = a - 1.0
    mid = -2.0 + t * t * (3.0 + t * (27.0 + t * (-44.0 + 18.0 * t)))
    return np.where(a <= 1.0, s * s * s - 3.0 * s, np.where(a <= 2.0, np.sign(s) * mid, s))


def d_profile_prime(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    t = a - 1.0
    mid = t * (6.0 + t * (81.0 + t * (-176.0 + 90.0 * t)))
    return np.where(a <= 1.0, 3.0 * s * s - 3.0, np.where(a <= 2.0, mid, 1.0))


def d_profile_second(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    t = a - 1.0
    mid = 6.0 + t * (162.0 + t * (-528.0 + 360.0 * t))
    return np.where(a <= 1.0, 6.0 * s, np.where(a <= 2.0, np.sign(s) * mid, 0.0))


def _iszero(s):
    return (np.asarray(s) == 0).astype(float)


def _zeros_like(s):
    return np.zeros_like(np.asarray(s, dtype=float))


FUNCTIONS: dict[str, tuple[Callable, Callable, Callable]] = {
    "D": (d_profile, d_profile_prime, d_profile_second),
    "psi": (DEFAULT_PROFILE.psi, DEFAULT_PROFILE.psi_prime, DEFAULT_PROFILE.psi_second),
    "iszero": (_iszero, _zeros_like, _zeros_like),
}


# ---------------------------------------------------------------------------
# jets


class Jet:
    """Second-order jet of a scalar function at a batch of ``N`` points in ``R^d``.

    ``val`` has shape ``(N,)``, ``grad`` ``(N, d)`` and ``hess`` ``(N, d, d)``.
    """

    __slots__ = ("val", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def variables(cls, points: np.ndarray) -> list["Jet"]:
        """Seed jets for the coordinate functions at ``points`` of shape ``(N, d)``."""
        points = np.asarray(points, dtype=float)
        n, d = points.shape
        out = []
        for k in range(d):
            g = np.zeros((n, d))
            g[:, k] = 1.0
            out.append(cls(points[:, k].copy(), g, np.zeros((n, d, d))))
        return out

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        c = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        return Jet(c, np.zeros_like(self.grad), np.zeros_like(self.hess))

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.grad, self.hess)
        return Jet(self.val + other.val, self.grad + other.grad, self.hess + other.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            o = np.asarray(other, dtype=float)
            if o.ndim == 0:
                return Jet(self.val * o, self.grad * o, self.hess * o)
            return Jet(self.val * o, self.grad * o[:, None], self.hess * o[:, None, None])
        a, b = self, other
        outer = a.grad[:, :, None] * b.grad[:, None, :]
        return Jet(
            a.val * b.val,
            a.grad * b.val[:, None] + b.grad * a.val[:, None],
            a.hess * b.val[:, None, None] + b.hess * a.val[:, None, None] + outer
            + np.swapaxes(outer, 1, 2),
        )

    __rmul__ = __mul__

    def apply(self, f0, f1, f2) -> "Jet":
        """Chain rule for a one-variable function with derivatives ``f1``, ``f2``."""
        v, d1, d2 = f0(self.val), f1(self.val), f2(self.val)
        g = self.grad
        return Jet(
            v,
            g * d1[:, None],
            self.hess * d1[:, None, None] + d2[:, None, None] * g[:, :, None] * g[:, None, :],
        )

    def reciprocal(self) -> "Jet":
        return self.apply(lambda x: 1.0 / x, lambda x: -1.0 / (x * x), lambda x: 2.0 / (x * x * x))

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def power(self, k: int) -> "Jet":
        if k == 0:
            return self._lift(1.0)
        if k == 1:
            return self
        if k < 0:
            return self.power(-k).reciprocal()
        return self.apply(lambda x: x ** k, lambda x: k * x ** (k - 1),
                          lambda x: k * (k - 1) * x ** (k - 2))


# ---------------------------------------------------------------------------
# expression nodes


class Expr:
    """Base class of expression nodes (immutable)."""

    prec = 100

    def evaluate(self, env: Mapping[str, object]):
        """Evaluate with ``env`` mapping variable names to arrays, floats or jets."""
        raise NotImplementedError

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def substitute(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        raise NotImplementedError

    # operator sugar
    def __add__(self, other):
        return add(self, wrap(other))

    def __radd__(self, other):
        return add(wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(wrap(other)))

    def __rsub__(self, other):
        return add(wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, wrap(other))

    def __rmul__(self, other):
        return mul(wrap(other), self)

    def __truediv__(self, other):
        return Div(self, wrap(other))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        return Pow(self, int(k))

    def __repr__(self) -> str:
        return f"Expr({self})"


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: Fraction

    def evaluate(self, env):
        return float(self.value)

    def variables(self):
        return frozenset()

    def substitute(self, mapping):
        return self

    def __str__(self):
        s = fraction_str(self.value)
        return f"({s})" if (self.value < 0 or self.value.denominator != 1) else s


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise InputError(f"unbound variable {self.name!r}") from None

    def variables(self):
        return frozenset([self.name])

    def substitute(self, mapping):
        return mapping.get(self.name, self)

    def __str__(self):
        return self.name


@dataclass(frozen=True, repr=False)
class Add(Expr):
    terms: tuple[Expr, ...]
    prec = 1

    def evaluate(self, env):
        total = self.terms[0].evaluate(env)
        for t in self.terms[1:]:
            total = total + t.evaluate(env)
        return total

    def variables(self):
        return frozenset().union(*(t.variables() for t in self.terms))

    def substitute(self, mapping):
        return add(*(t.substitute(mapping) for t in self.terms))

    def __str__(self):
        out = _paren(self.terms[0], self.prec)
        for t in self.terms[1:]:
            if isinstance(t, Neg):
                out += " - " + _paren(t.arg, 2)
            else:
                out += " + " + _paren(t, self.prec)
        return out


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr
    prec = 2

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def variables(self):
        return self.arg.variables()

    def substitute(self, mapping):
        return neg(self.arg.substitute(mapping))

    def __str__(self):
        return "-" + _paren(self.arg, 3)


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    factors: tuple[Expr, ...]
    prec = 2

    def evaluate(self, env):
        total = self.factors[0].evaluate(env)
        for f in self.factors[1:]:
            total = total * f.evaluate(env)
        return total

    def variables(self):
        return frozenset().union(*(f.variables() for f in self.factors))

    def substitute(self, mapping):
        return mul(*(f.substitute(mapping) for f in self.factors))

    def __str__(self):
        return "*".join(_paren(f, 3) for f in self.factors)


@dataclass(frozen=True, repr=False)
class Div(Expr):
    num: Expr
    den: Expr
    prec = 2

    def evaluate(self, env):
        return self.num.evaluate(env) / self.den.evaluate(env)

    def variables(self):
        return self.num.variables() | self.den.variables()

    def substitute(self, mapping):
        return Div(self.num.substitute(mapping), self.den.substitute(mapping))

    def __str__(self):
        return _paren(self.num, 2) + "/" + _paren(self.den, 3)


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exponent: int
    prec = 4

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if isinstance(b, Jet):
            return b.power(self.exponent)
        return b ** self.exponent if self.exponent >= 0 else 1.0 / b ** (-self.exponent)

    def variables(self):
        return self.base.variables()

    def substitute(self, mapping):
        return Pow(self.base.substitute(mapping), self.exponent)

    def __str__(self):
        e = str(self.exponent) if self.exponent >= 0 else f"({self.exponent})"
        return _paren(self.base, 5) + "^" + e


@dataclass(frozen=True, repr=False)
class Call(Expr):
    func: str
    arg: Expr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise InputError(f"unknown function {self.func!r}")

    def evaluate(self, env):
        a = self.arg.evaluate(env)
        f0, f1, f2 = FUNCTIONS[self.func]
        if isinstance(a, Jet):
            return a.apply(f0, f1, f2)
        return f0(a)

    def variables(self):
        return self.arg.variables()

    def substitute(self, mapping):
        return Call(self.func, self.arg.substitute(mapping))

    def __str__(self):
        return f"{self.func}({self.arg})"


def _paren(e: Expr, prec: int) -> str:
    s = str(e)
    return f"({s})" if e.prec < prec else s


def wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(as_fraction(x))


def const(x) -> Const:
    return Const(as_fraction(x))


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    c = Fraction(0)
    for t in terms:
        t = wrap(t)
        parts = t.terms if isinstance(t, Add) else (t,)
        for p in parts:
            if isinstance(p, Const):
                c += p.value
            else:
                flat.append(p)
    if c != 0 or not flat:
        flat.append(Const(c))
    return flat[0] if len(flat) == 1 else Add(tuple(flat))


def neg(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Neg):
        return e.arg
    return Neg(e)


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    c = Fraction(1)
    for f in factors:
        f = wrap(f)
        parts = f.factors if isinstance(f, Mul) else (f,)
        for p in parts:
            if isinstance(p, Const):
                c *= p.value
            else:
                flat.append(p)
    if c == 0:
        return ZERO
    if c != 1 or not flat:
        flat.insert(0, Const(c))
    return flat[0] if len(flat) == 1 else Mul(tuple(flat))


def call(func: str, arg) -> Expr:
    return Call(func, wrap(arg))


def var(name: str) -> Var:
    return Var(name)


# ---------------------------------------------------------------------------
# parsing


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv}


def parse(text: str) -> Expr:
    """Parse an infix expression; ``^`` and ``**`` both denote integer powers.

    >>> str(parse("w + 3/2*v_1^2"))
    'w + (3/2)*v_1^2'
    """
    if isinstance(text, (int, float, Fraction)):
        return const(text)
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {text!r}") from exc
    return _convert(tree.body, text)


def _convert(node, text) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return const(node.value if isinstance(node.value, int) else str(node.value))
    if isinstance(node, ast.Name):
        return Var(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _convert(node.operand, text)
        return neg(inner) if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp):
        left = _convert(node.left, text)
        if isinstance(node.op, ast.Pow):
            exp = _convert(node.right, text)
            if not (isinstance(exp, Const) and exp.value.denominator == 1):
                raise InputError(f"only integer exponents are allowed in {text!r}")
            return Pow(left, int(exp.value))
        right = _convert(node.right, text)
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise InputError(f"unsupported operator in {text!r}")
        if isinstance(node.op, ast.Div) and isinstance(left, Const) and isinstance(right, Const):
            if right.value == 0:
                raise InputError(f"division by zero in {text!r}")
            return Const(left.value / right.value)
        return op(left, right)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and len(node.args) == 1 \
            and not node.keywords:
        return Call(node.func.id, _convert(node.args[0], text))
    raise InputError(f"unsupported syntax in {text!r}")


# ---------------------------------------------------------------------------
# evaluation helpers


def evaluate(e: Expr, names: Sequence[str], points: np.ndarray) -> np.ndarray:
    """Values at ``points`` of shape ``(N, len(names))``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    env = {n: points[:, k] for k, n in enumerate(names)}
    out = e.evaluate(env)
    return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0],)).copy()


def jet(e: Expr, names: Sequence[str], points: np.ndarray,
        fixed: Mapping[str, float] | None = None) -> Jet:
    """Value, gradient and Hessian in the variables ``names`` at ``points``.

    ``fixed`` supplies values for other variables, which are not differentiated.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    env: dict = dict(fixed or {})
    env.update(zip(names, Jet.variables(points)))
    out = e.evaluate(env)
    if not isinstance(out, Jet):
        n, d = points.shape
        return Jet(np.full(n, float(out)), np.zeros((n, d)), np.zeros((n, d, d)))
    return out
