"""Floating-point polynomial and rational-function algebra.

Polynomials carry a basis tag (monomial or Legendre) and, for the Legendre
basis, an affine domain ``[lo, hi]`` that is mapped onto ``[-1, 1]``.
Rational functions keep their denominators as a list of user-supplied
factors with multiplicities; no floating-point GCD is ever attempted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as npoly

from . import kernels

MONOMIAL = "monomial"
LEGENDRE = "legendre"
_BASES = (MONOMIAL, LEGENDRE)

# relative tolerance for treating two denominator factors as the same factor
FACTOR_RTOL = 1e-12


class DegenerateInputError(ValueError):
    """Raised when an operation receives an identically zero polynomial."""


class BasisMismatchError(ValueError):
    pass


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float).ravel()
    if c.size == 0:
        return np.zeros(1)
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial ``sum_k coeffs[k] * b_k(t)``.

    ``b_k`` is ``t**k`` for the monomial basis, or ``P_k(s)`` with
    ``s = (2t - lo - hi) / (hi - lo)`` for the Legendre basis.
    """

    coeffs: np.ndarray
    basis: str = MONOMIAL
    domain: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.basis not in _BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        lo, hi = (float(v) for v in self.domain)
        if not hi > lo:
            raise ValueError("polynomial domain must satisfy lo < hi")
        c = _trim(self.coeffs)
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "domain", (lo, hi))

    # construction helpers
    @classmethod
    def monomial(cls, coeffs: Iterable[float]) -> "Polynomial":
        return cls(np.asarray(list(coeffs), dtype=float))

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls(np.array([float(value)]))

    @classmethod
    def t(cls) -> "Polynomial":
        return cls(np.array([0.0, 1.0]))

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def _s(self, t):
        lo, hi = self.domain
        return (2.0 * np.asarray(t, dtype=float) - lo - hi) / (hi - lo)

    def __call__(self, t):
        if self.basis == MONOMIAL:
            return npoly.polyval(np.asarray(t, dtype=float), self.coeffs)
        s = self._s(t)
        out = kernels.legval(s, self.coeffs).reshape(s.shape)
        return out[()] if out.ndim == 0 else out

    def deriv(self) -> "Polynomial":
        if self.basis == MONOMIAL:
            return Polynomial(npoly.polyder(self.coeffs))
        lo, hi = self.domain
        return Polynomial(npleg.legder(self.coeffs) * (2.0 / (hi - lo)), LEGENDRE, self.domain)

    def max_abs_coeff(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def scaled(self, factor: float) -> "Polynomial":
        return Polynomial(self.coeffs * float(factor), self.basis, self.domain)

    def __repr__(self):
        dom = "" if self.basis == MONOMIAL else f", domain={self.domain}"
        return f"Polynomial({np.array2string(self.coeffs, precision=6)}, {self.basis}{dom})"


def poly_arith(op: str, p: Polynomial, q) -> Polynomial:
    """Add, subtract, multiply or scale polynomials sharing a basis.

    ``scale`` takes a real ``q``.  ``mul`` is defined only for the monomial
    basis; convert with :func:`change_basis` first.
    """
    if op == "scale":
        return p.scaled(float(q))
    if not isinstance(q, Polynomial):
        q = Polynomial(np.array([float(q)]), p.basis, p.domain)
    if p.basis != q.basis or (p.basis == LEGENDRE and p.domain != q.domain):
        raise BasisMismatchError(f"basis mismatch: {p.basis}{p.domain} vs {q.basis}{q.domain}")
    if op == "add":
        return Polynomial(npoly.polyadd(p.coeffs, q.coeffs), p.basis, p.domain)
    if op == "sub":
        return Polynomial(npoly.polysub(p.coeffs, q.coeffs), p.basis, p.domain)
    if op == "mul":
        if p.basis != MONOMIAL:
            raise BasisMismatchError("mul requires the monomial basis")
        return Polynomial(npoly.polymul(p.coeffs, q.coeffs))
    raise ValueError(f"unknown op {op!r}")


def legendre_basis(n: int) -> list[Polynomial]:
    """Monomial-basis coefficients of ``P_0 .. P_n``.

    Uses the three-term recurrence ``(k+1) P_{k+1} = (2k+1) t P_k - k P_{k-1}``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = [np.array([1.0])]
    if n >= 1:
        out.append(np.array([0.0, 1.0]))
    for k in range(1, n):
        tp = np.concatenate([[0.0], out[k]])
        prev = np.pad(out[k - 1], (0, tp.size - out[k - 1].size))
        out.append(((2 * k + 1) * tp - k * prev) / (k + 1))
    return [Polynomial(c) for c in out]


def change_basis(p: Polynomial, target: str, domain: tuple[float, float] | None = None) -> Polynomial:
    """Re-express ``p`` in ``target`` basis; pointwise values are preserved."""
    if target not in _BASES:
        raise ValueError(f"unknown basis {target!r}")
    dom = p.domain if domain is None else (float(domain[0]), float(domain[1]))
    if p.basis == target and (target == MONOMIAL or dom == p.domain):
        return p
    if p.basis == MONOMIAL:
        mono = p.coeffs
    else:
        ser = npleg.Legendre(p.coeffs, domain=list(p.domain))
        mono = ser.convert(kind=npoly.Polynomial, domain=[-1, 1], window=[-1, 1]).coef
    if target == MONOMIAL:
        return Polynomial(mono)
    ser = npoly.Polynomial(mono).convert(kind=npleg.Legendre, domain=list(dom))
    return Polynomial(ser.coef, LEGENDRE, dom)


def as_monomial(p: Polynomial) -> Polynomial:
    return change_basis(p, MONOMIAL)


# --------------------------------------------------------------------------
# design space


@dataclass(frozen=True)
class DesignSpace:
    """Finite union of disjoint closed intervals; ``a == b`` is a singleton."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if not ivs:
            raise ValueError("design space needs at least one interval")
        for a, b in ivs:
            if not (np.isfinite(a) and np.isfinite(b)) or a > b:
                raise ValueError(f"invalid interval [{a}, {b}]")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if not b0 < a1:
                raise ValueError("intervals must be pairwise disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def interval(cls, a: float, b: float) -> "DesignSpace":
        return cls(((a, b),))

    @property
    def proper(self) -> list[tuple[float, float]]:
        return [(a, b) for a, b in self.intervals if b > a]

    @property
    def singletons(self) -> list[float]:
        return [a for a, b in self.intervals if a == b]

    @property
    def k1(self) -> int:
        return len(self.singletons)

    @property
    def k2(self) -> int:
        return len(self.proper)

    @property
    def hull(self) -> tuple[float, float]:
        return self.intervals[0][0], self.intervals[-1][1]

    @property
    def endpoints(self) -> list[float]:
        pts = []
        for a, b in self.intervals:
            pts.append(a)
            if b > a:
                pts.append(b)
        return pts

    def contains(self, t: float, tol: float = 0.0) -> bool:
        return any(a - tol <= t <= b + tol for a, b in self.intervals)

    def grid(self, n: int) -> np.ndarray:
        """``n`` equispaced points (endpoints included) per proper interval plus singletons."""
        pts = []
        for a, b in self.intervals:
            pts.append(np.array([a]) if a == b else np.linspace(a, b, max(int(n), 2)))
        return np.unique(np.concatenate(pts))

    def to_list(self) -> list[list[float]]:
        return [[a, b] for a, b in self.intervals]


# --------------------------------------------------------------------------
# rational functions


def _normalize_factor(p: Polynomial) -> tuple[Polynomial, float]:
    """Return ``(g, c)`` with ``p = c * g``, ``g`` scaled to max-abs 1 and positive leading coefficient."""
    p = as_monomial(p)
    if p.is_zero():
        raise DegenerateInputError("zero polynomial used as a denominator factor")
    c = p.coeffs[np.argmax(np.abs(p.coeffs))]
    if p.coeffs[-1] / c < 0:
        c = -c
    return Polynomial(p.coeffs / c), float(c)


def _same_factor(p: Polynomial, q: Polynomial) -> bool:
    return p.degree == q.degree and np.allclose(p.coeffs, q.coeffs, rtol=0, atol=FACTOR_RTOL)


def _merge_factors(*groups: Sequence[tuple[Polynomial, int]], mode: str = "sum") -> tuple[tuple[Polynomial, int], ...]:
    # "sum" multiplies the groups together, "max" takes their lcm (groups must be duplicate-free)
    out: list[list] = []
    for group in groups:
        for f, k in group:
            for entry in out:
                if _same_factor(entry[0], f):
                    entry[1] = entry[1] + k if mode == "sum" else max(entry[1], k)
                    break
            else:
                out.append([f, k])
    return tuple((f, int(k)) for f, k in out if k > 0)


def _factor_product(factors: Sequence[tuple[Polynomial, int]]) -> Polynomial:
    c = np.array([1.0])
    for f, k in factors:
        for _ in range(k):
            c = npoly.polymul(c, f.coeffs)
    return Polynomial(c)


def _subtract_factors(big, small) -> tuple[tuple[Polynomial, int], ...]:
    """Multiset difference ``big - small``; ``small`` must be contained in ``big``."""
    out = [[f, k] for f, k in big]
    for f, k in small:
        for entry in out:
            if _same_factor(entry[0], f):
                if entry[1] < k:
                    raise ValueError("factor multiplicity exceeds the multiple")
                entry[1] -= k
                break
        else:
            raise ValueError("denominator factor missing from the multiple")
    return tuple((f, k) for f, k in out if k > 0)


@dataclass(frozen=True)
class RationalFunction:
    """``num / prod(factor**mult)`` with the denominator kept factored."""

    num: Polynomial
    den_factors: tuple[tuple[Polynomial, int], ...] = field(default=())

    def __post_init__(self):
        num = as_monomial(self.num)
        scale = 1.0
        factors = []
        for f, k in self.den_factors:
            if int(k) < 0:
                raise ValueError("factor multiplicity must be nonnegative")
            g, c = _normalize_factor(f)
            if g.degree == 0:
                scale *= c ** int(k)
                continue
            scale *= c ** int(k)
            factors.append((g, int(k)))
        if scale != 1.0:
            num = num.scaled(1.0 / scale)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den_factors", _merge_factors(factors))

    @classmethod
    def polynomial(cls, p: Polynomial) -> "RationalFunction":
        return cls(as_monomial(p))

    @classmethod
    def constant(cls, value: float) -> "RationalFunction":
        return cls(Polynomial.constant(value))

    @property
    def den(self) -> Polynomial:
        return _factor_product(self.den_factors)

    @property
    def num_degree(self) -> int:
        return self.num.degree

    @property
    def den_degree(self) -> int:
        return sum(f.degree * k for f, k in self.den_factors)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.degree == 0 and not self.den_factors

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        val = self.num(t)
        for f, k in self.den_factors:
            val = val / f(t) ** k
        return val

    def __mul__(self, other) -> "RationalFunction":
        if not isinstance(other, RationalFunction):
            return RationalFunction(self.num.scaled(float(other)), self.den_factors)
        return RationalFunction(
            poly_arith("mul", self.num, other.num),
            _merge_factors(self.den_factors, other.den_factors),
        )

    __rmul__ = __mul__

    def __add__(self, other) -> "RationalFunction":
        if not isinstance(other, RationalFunction):
            other = RationalFunction.constant(float(other))
        common = _merge_factors(self.den_factors, other.den_factors, mode="max")
        a = poly_arith("mul", self.num, _factor_product(_subtract_factors(common, self.den_factors)))
        b = poly_arith("mul", other.num, _factor_product(_subtract_factors(common, other.den_factors)))
        return RationalFunction(poly_arith("add", a, b), common)

    def __neg__(self) -> "RationalFunction":
        return RationalFunction(self.num.scaled(-1.0), self.den_factors)

    def __sub__(self, other) -> "RationalFunction":
        return self + (-other if isinstance(other, RationalFunction) else -float(other))

    def reciprocal(self) -> "RationalFunction":
        if self.num.is_zero():
            raise ZeroDivisionError("reciprocal of the zero rational function")
        return RationalFunction(_factor_product(self.den_factors), ((self.num, 1),))

    def __truediv__(self, other) -> "RationalFunction":
        if not isinstance(other, RationalFunction):
            return self * (1.0 / float(other))
        return self * other.reciprocal()

    def __pow__(self, k: int) -> "RationalFunction":
        k = int(k)
        if k < 0:
            return self.reciprocal() ** (-k)
        out = RationalFunction.constant(1.0)
        for _ in range(k):
            out = out * self
        return out

    def cofactor(self, multiple: Sequence[tuple[Polynomial, int]]) -> Polynomial:
        """Polynomial ``multiple / den(self)`` computed by factor bookkeeping."""
        return _factor_product(_subtract_factors(multiple, self.den_factors))

    def times_multiple(self, multiple: Sequence[tuple[Polynomial, int]]) -> Polynomial:
        """The polynomial ``multiple * self`` (``multiple`` must be a common multiple of the denominator)."""
        return poly_arith("mul", self.num, self.cofactor(multiple))

    def __repr__(self):
        dens = " * ".join(f"({np.array2string(f.coeffs, precision=4)})^{k}" for f, k in self.den_factors)
        return f"RationalFunction(num={np.array2string(self.num.coeffs, precision=6)}, den={dens or '1'})"


def lcm_factors(fs: Sequence[RationalFunction]) -> tuple[tuple[Polynomial, int], ...]:
    """Least common multiple of the denominators, as factor multiset."""
    return _merge_factors(*[f.den_factors for f in fs], mode="max")


def lcm_denominator(fs: Sequence[RationalFunction]) -> Polynomial:
    """Least common multiple of the (factored) denominators of ``fs``.

    Factors are matched by coefficients, so the result is minimal only with
    respect to the factorisations supplied.
    """
    return _factor_product(lcm_factors(fs))


# --------------------------------------------------------------------------
# roots


def companion_roots(p: Polynomial) -> np.ndarray:
    """All complex roots of ``p`` (companion-matrix eigenvalues, LAPACK balancing)."""
    if p.is_zero():
        raise DegenerateInputError("roots of the zero polynomial are undefined")
    if p.degree == 0:
        return np.zeros(0, dtype=complex)
    c = p.coeffs
    if p.basis == MONOMIAL:
        comp = npoly.polycompanion(c)
        r = np.linalg.eigvals(comp) if p.degree > 1 else np.array([-c[0] / c[1]])
        return r.astype(complex)
    if p.degree == 1:
        s = np.array([-c[0] / c[1]], dtype=complex)
    else:
        s = np.linalg.eigvals(npleg.legcompanion(c)).astype(complex)
    lo, hi = p.domain
    return 0.5 * (hi - lo) * s + 0.5 * (hi + lo)


def real_roots_in(p: Polynomial, space: DesignSpace, tol: float = 1e-6) -> list[float]:
    """Real roots of ``p`` lying in ``space``.

    Keeps eigenvalues with ``|imag| <= tol``, clamps values within ``tol`` of an
    interval endpoint onto it, drops values outside the space by more than
    ``tol`` and merges roots closer than ``10 * tol`` into their centroid.
    """
    if p.is_zero():
        raise DegenerateInputError("cannot isolate roots of the zero polynomial")
    roots = companion_roots(p)
    cand = np.sort(roots[np.abs(roots.imag) <= tol].real)
    kept = []
    for r in cand:
        val = None
        for a, b in space.intervals:
            if a - tol <= r <= b + tol:
                if abs(r - a) <= tol:
                    val = a
                elif abs(r - b) <= tol:
                    val = b
                else:
                    val = float(min(max(r, a), b))
                break
        if val is not None:
            kept.append(val)
    return merge_close(kept, 10.0 * tol, anchors=space.endpoints)


def merge_close(values: Iterable[float], radius: float, anchors: Iterable[float] = ()) -> list[float]:
    """Cluster sorted values whose consecutive gaps are ``<= radius``; return centroids.

    A cluster containing one of ``anchors`` (e.g. an interval endpoint) is
    reported as that anchor.
    """
    vals = sorted(float(v) for v in values)
    anchors = set(float(a) for a in anchors)
    out: list[list[float]] = []
    for v in vals:
        if out and v - out[-1][-1] <= radius:
            out[-1].append(v)
        else:
            out.append([v])
    merged = []
    for cl in out:
        hit = [v for v in cl if v in anchors]
        merged.append(hit[0] if hit else float(np.mean(cl)))
    return merged


def lagrange_nodes(a: float, b: float, n: int) -> np.ndarray:
    """``n`` Chebyshev points of the first kind on ``[a, b]``."""
    k = np.arange(n)
    x = np.cos((2 * k + 1) * np.pi / (2 * n))[::-1]
    return 0.5 * (b - a) * x + 0.5 * (a + b)
