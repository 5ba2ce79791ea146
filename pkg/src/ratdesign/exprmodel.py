"""Rational expressions in ``t`` and ``theta1..thetaN``.

Surface syntax: real literals, ``t``, ``thetaK`` (K >= 1, stored as index
K-1), ``+ - * / ^`` with the usual precedence, unary minus and parentheses.
Exponents must be integer constants (negative allowed).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .polycore import DesignSpace, Polynomial, RationalFunction


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.column = pos + 1
        self.text = text
        super().__init__(f"{message} (column {pos + 1})")


class ModelError(ValueError):
    """A model violates one of its validity requirements."""


# --------------------------------------------------------------------------
# expression tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class VarT:
    pass


@dataclass(frozen=True)
class Param:
    index: int


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Const, VarT, Param, Add, Sub, Mul, Div, Pow]

ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            stripped = len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[pos + stripped]!r}", pos + stripped, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, param_count: int | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.param_count = param_count

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(msg, tok[2], self.text)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.error("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("-", "+"):
            self.take()
            inner = self.unary()
            if tok[1] == "+":
                return inner
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Sub(ZERO, inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            exp = self.unary()
            if not isinstance(exp, Const) or exp.value != int(exp.value):
                self.error("exponent must be an integer constant", tok)
            return Pow(base, int(exp.value))
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val == "t":
                return VarT()
            m = re.fullmatch(r"theta(\d+)", val)
            if m:
                k = int(m.group(1))
                if k < 1:
                    raise ExprSyntaxError("parameters are numbered from theta1", pos, self.text)
                if self.param_count is not None and k > self.param_count:
                    raise ExprSyntaxError(f"{val} exceeds the declared parameter count {self.param_count}", pos, self.text)
                return Param(k - 1)
            raise ExprSyntaxError(f"unknown name {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            e = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of expression", pos, self.text)
        raise ExprSyntaxError(f"unexpected token {val!r}", pos, self.text)


def parse(text: str, param_count: int | None = None) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text, param_count).parse()


def to_text(e: Expr) -> str:
    """Fully parenthesised surface syntax; ``parse(to_text(e))`` evaluates like ``e``."""
    if isinstance(e, Const):
        return repr(float(e.value)) if e.value >= 0 else f"({float(e.value)!r})"
    if isinstance(e, VarT):
        return "t"
    if isinstance(e, Param):
        return f"theta{e.index + 1}"
    if isinstance(e, Pow):
        return f"({to_text(e.base)})^({e.exponent})"
    sym = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    return f"({to_text(e.left)} {sym} {to_text(e.right)})"


def max_param(e: Expr) -> int:
    """Largest parameter index used (``-1`` if none)."""
    if isinstance(e, Param):
        return e.index
    if isinstance(e, (Add, Sub, Mul, Div)):
        return max(max_param(e.left), max_param(e.right))
    if isinstance(e, Pow):
        return max_param(e.base)
    return -1


def evaluate(e: Expr, t, theta: Sequence[float] = ()):
    """Numerically evaluate ``e`` (vectorised over ``t``)."""
    if isinstance(e, Const):
        return e.value + 0.0 * np.asarray(t, dtype=float)
    if isinstance(e, VarT):
        return np.asarray(t, dtype=float)
    if isinstance(e, Param):
        return float(theta[e.index]) + 0.0 * np.asarray(t, dtype=float)
    if isinstance(e, Pow):
        return evaluate(e.base, t, theta) ** float(e.exponent)
    a = evaluate(e.left, t, theta)
    b = evaluate(e.right, t, theta)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    return a / b


# --------------------------------------------------------------------------
# differentiation


def _is(e, v):
    return isinstance(e, Const) and e.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return Div(a, b)


def _pow(a, k):
    if k == 0:
        return ONE
    if k == 1:
        return a
    return Pow(a, k)


def differentiate(e: Expr, j: int) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to parameter ``j`` (0-based)."""
    if isinstance(e, (Const, VarT)):
        return ZERO
    if isinstance(e, Param):
        return ONE if e.index == j else ZERO
    if isinstance(e, Pow):
        db = differentiate(e.base, j)
        if _is(db, 0):
            return ZERO
        return _mul(_mul(Const(float(e.exponent)), _pow(e.base, e.exponent - 1)), db)
    da = differentiate(e.left, j)
    db = differentiate(e.right, j)
    if isinstance(e, Add):
        return _add(da, db)
    if isinstance(e, Sub):
        return _sub(da, db)
    if isinstance(e, Mul):
        return _add(_mul(da, e.right), _mul(e.left, db))
    # quotient rule, shortened when one side is parameter-free
    if _is(db, 0):
        return _div(da, e.right)
    first = _div(da, e.right)
    second = _div(_mul(e.left, db), _pow(e.right, 2))
    return _sub(first, second)


# --------------------------------------------------------------------------
# conversion to rational functions


def _factored(e: Expr, theta):
    """Return ``(scale, factors)`` when ``e`` is a product of powers of polynomials."""
    if isinstance(e, Pow) and e.exponent > 0:
        inner = _factored(e.base, theta)
        if inner is None:
            return None
        c, fs = inner
        return c ** e.exponent, [(f, k * e.exponent) for f, k in fs]
    if isinstance(e, Mul):
        left = _factored(e.left, theta)
        right = _factored(e.right, theta)
        if left is None or right is None:
            return None
        return left[0] * right[0], left[1] + right[1]
    r = to_rational(e, theta)
    if r.den_factors:
        return None
    if r.num.degree == 0:
        return float(r.num.coeffs[0]), []
    return 1.0, [(r.num, 1)]


def to_rational(e: Expr, theta_star: Sequence[float] = ()) -> RationalFunction:
    """Substitute ``theta_star`` and collect ``e`` into a single num/den pair."""
    if isinstance(e, Const):
        return RationalFunction.constant(e.value)
    if isinstance(e, VarT):
        return RationalFunction(Polynomial.t())
    if isinstance(e, Param):
        if e.index >= len(theta_star):
            raise ModelError(f"theta{e.index + 1} has no value to substitute")
        return RationalFunction.constant(float(theta_star[e.index]))
    if isinstance(e, Pow):
        if e.exponent < 0:
            return to_rational(Div(ONE, Pow(e.base, -e.exponent)), theta_star)
        return to_rational(e.base, theta_star) ** e.exponent
    a = to_rational(e.left, theta_star)
    if isinstance(e, Div):
        fac = _factored(e.right, theta_star)
        if fac is None:
            b = to_rational(e.right, theta_star)
            if b.is_zero():
                raise ModelError("division by an identically zero denominator")
            return a / b
        c, fs = fac
        if c == 0.0 or any(f.is_zero() for f, _ in fs):
            raise ModelError("division by an identically zero denominator")
        return a * RationalFunction(Polynomial.constant(1.0 / c), tuple(fs))
    b = to_rational(e.right, theta_star)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    return a * b


# --------------------------------------------------------------------------
# models


def _positive_on(r: RationalFunction, space: DesignSpace) -> bool:
    # numerator and denominator of one sign (normalised factors may flip both)
    pts = space.grid(1001)
    den = np.ones_like(pts)
    for f, k in r.den_factors:
        den = den * f(pts) ** k
    num = r.num(pts)
    return bool((np.all(num > 0) and np.all(den > 0)) or (np.all(num < 0) and np.all(den < 0)))


@dataclass(frozen=True)
class RegressionModel:
    """Linear model ``sum_i theta_i f_i(t)`` with variance ``1 / weight(t)``."""

    basis: tuple[RationalFunction, ...]
    weight: RationalFunction
    space: DesignSpace
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"f{i + 1}" for i in range(len(self.basis))))

    @property
    def m(self) -> int:
        return len(self.basis)

    def features(self, t) -> np.ndarray:
        """Array ``(len(t), m)`` of basis values."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([f(t) for f in self.basis], axis=1)

    def point_information(self, t) -> np.ndarray:
        """``omega(t) f(t) f(t)^T`` for each point; shape ``(len(t), m, m)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        F = self.features(t)
        w = self.weight(t)
        return w[:, None, None] * F[:, :, None] * F[:, None, :]

    def information(self, points, weights) -> np.ndarray:
        """Fisher information of the design ``sum_j weights_j delta_{points_j}``."""
        P = self.point_information(points)
        return np.einsum("j,jab->ab", np.asarray(weights, dtype=float), P)

    def validate(self) -> "RegressionModel":
        if self.m < 1:
            raise ModelError("model needs at least one basis function")
        for i, f in enumerate(self.basis):
            for g, _ in f.den_factors:
                roots = np.roots(g.coeffs[::-1]) if g.degree > 0 else []
                for r in roots:
                    if abs(r.imag) < 1e-9 and self.space.contains(r.real, 1e-12):
                        raise ModelError(f"basis function {self.labels[i]} has a pole at t={r.real:.6g} in the design space")
        if not _positive_on(self.weight, self.space):
            raise ModelError("weight function must have positive numerator and denominator on the design space")
        npts = max(2 * self.m, 32)
        pts = self.space.grid(npts)
        F = self.features(pts)
        if not np.all(np.isfinite(F)):
            raise ModelError("basis functions are not finite on the design space")
        norms = np.linalg.norm(F, axis=0)
        if np.any(norms == 0):
            raise ModelError("a basis function vanishes on the design space")
        sv = np.linalg.svd(F / norms, compute_uv=False)
        if pts.size < self.m or sv[-1] <= 1e-8:
            raise ModelError("basis functions are numerically linearly dependent on the design space")
        return self

    def scaled_basis(self, factors: Sequence[float]) -> "RegressionModel":
        return RegressionModel(
            tuple(f * float(c) for f, c in zip(self.basis, factors)), self.weight, self.space, self.labels
        )


@dataclass(frozen=True)
class NonlinearModel:
    """Model ``f(t; theta)`` with ``param_count`` parameters."""

    f: Expr
    param_count: int
    space: DesignSpace
    weight: RationalFunction = field(default_factory=lambda: RationalFunction.constant(1.0))

    def __post_init__(self):
        if self.param_count < 1:
            raise ModelError("a nonlinear model needs at least one parameter")
        if max_param(self.f) >= self.param_count:
            raise ModelError("expression uses more parameters than declared")
        if not _positive_on(self.weight, self.space):
            raise ModelError("weight function must be positive on the design space")


def linearize(model: NonlinearModel, theta_star: Sequence[float]) -> RegressionModel:
    """Locally linearised model: basis ``d f / d theta_i`` at ``theta_star``."""
    theta_star = [float(v) for v in theta_star]
    if len(theta_star) != model.param_count:
        raise ModelError(f"theta_star has {len(theta_star)} entries, model has {model.param_count} parameters")
    basis = tuple(to_rational(differentiate(model.f, i), theta_star) for i in range(model.param_count))
    labels = tuple(f"df/dtheta{i + 1}" for i in range(model.param_count))
    return RegressionModel(basis, model.weight, model.space, labels).validate()


def gradient_exprs(model: NonlinearModel) -> list[Expr]:
    return [differentiate(model.f, i) for i in range(model.param_count)]
