"""Semidefinite descriptions of polynomials nonnegative on intervals.

Two equivalent parametrisations are provided for each interval ``[a, b]``.

* Monomial coefficient maps: ``p_k`` as a linear functional of PSD matrices
  ``X, Y`` built from the weighted sums of squares

  - even ``d = 2m``: ``p = r^T X r + (t - a)(b - t) q^T Y q``
  - odd ``d = 2m + 1``: ``p = (t - a) r^T X r + (b - t) r^T Y r``

  with ``r = (1, t, ..., t^m)`` and ``q = (1, ..., t^(m-1))``.
* An evaluation form used for numerical work: the same identity written in
  the Chebyshev basis of ``s = (2t - a - b) / (b - a)`` and imposed at
  ``d + 1`` Chebyshev nodes of ``[a, b]``.  Every node functional is rank one
  in ``X`` and in ``Y``, and the data stays well scaled at high degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .polycore import MONOMIAL, DesignSpace, Polynomial, as_monomial, companion_roots, lagrange_nodes


class CertificationError(RuntimeError):
    """The SDP behind a certificate could not be solved reliably."""


@dataclass(frozen=True)
class EvaluationForm:
    """``p(nodes[j]) = <GX[j], X> + <GY[j], Y>`` for ``j = 0..d``."""

    nodes: np.ndarray
    GX: np.ndarray
    GY: np.ndarray
    x_vectors: np.ndarray
    y_vectors: np.ndarray
    x_weights: np.ndarray
    y_weights: np.ndarray


@dataclass(frozen=True)
class ConeRepresentation:
    """PSD description of degree-``d`` polynomials nonnegative on ``[a, b]``.

    ``coeff_maps`` is a pair ``(FX, FY)`` of arrays with shapes
    ``(d+1, nX, nX)`` and ``(d+1, nY, nY)``; coefficient ``p_k`` equals
    ``<FX[k], X> + <FY[k], Y>``.  The matrices are symmetric so that the
    functional does not depend on how off-diagonal mass is split.
    """

    degree: int
    interval: tuple
    block_dims: tuple
    coeff_maps: tuple

    @property
    def even(self) -> bool:
        return self.degree % 2 == 0

    def coefficients(self, X, Y=None) -> np.ndarray:
        """Monomial coefficients produced by ``(X, Y)``."""
        FX, FY = self.coeff_maps
        p = np.einsum("kij,ij->k", FX, np.asarray(X, dtype=float))
        if self.block_dims[1]:
            p = p + np.einsum("kij,ij->k", FY, np.asarray(Y, dtype=float))
        return p

    def polynomial(self, X, Y=None) -> Polynomial:
        return Polynomial(self.coefficients(X, Y))

    @cached_property
    def evaluation_form(self) -> EvaluationForm:
        d = self.degree
        a, b = self.interval
        nX, nY = self.block_dims
        nodes = lagrange_nodes(a, b, d + 1)
        s = (2.0 * nodes - a - b) / (b - a)
        V = np.polynomial.chebyshev.chebvander(s, max(nX - 1, 0))
        if self.even:
            wx = np.ones_like(s)
            wy = 1.0 - s**2
            vx, vy = V[:, :nX], V[:, :nY]
        else:
            wx, wy = 1.0 + s, 1.0 - s
            vx = vy = V[:, :nX]
        GX = wx[:, None, None] * vx[:, :, None] * vx[:, None, :]
        GY = wy[:, None, None] * vy[:, :, None] * vy[:, None, :]
        return EvaluationForm(nodes, GX, GY, vx, vy, wx, wy)

    def _cheb_to_monomial(self, n):
        """Row ``k`` holds the monomial coefficients (in ``t``) of ``T_k(s)``."""
        a, b = self.interval
        C = np.zeros((n, n))
        for k in range(n):
            c = np.polynomial.Chebyshev.basis(k, domain=[a, b]).convert(kind=np.polynomial.Polynomial).coef
            C[k, : c.size] = c
        return C

    def to_monomial_factors(self, X, Y=None):
        """Convert evaluation-form Gram matrices to the monomial ``(X, Y)``."""
        a, b = self.interval
        nX, nY = self.block_dims
        CX = self._cheb_to_monomial(nX)
        X = np.asarray(X, dtype=float)
        h = b - a
        if self.even:
            Xm = CX.T @ X @ CX
            if nY:
                CY = CX[:nY, :nY]
                Ym = (4.0 / h**2) * (CY.T @ np.asarray(Y, dtype=float) @ CY)
            else:
                Ym = np.zeros((0, 0))
        else:
            Xm = (2.0 / h) * (CX.T @ X @ CX)
            Ym = (2.0 / h) * (CX.T @ np.asarray(Y, dtype=float) @ CX)
        return Xm, Ym


def _hankel_maps(n, d, shift):
    """``F[k]`` with ``<F[k], X> = sum_{i+j=k-shift} x_ij`` for an ``n x n`` ``X``."""
    F = np.zeros((d + 1, n, n))
    for i in range(n):
        for j in range(n):
            k = i + j + shift
            if 0 <= k <= d:
                F[k, i, j] = 1.0
    return F


def represent_interval(d: int, a: float, b: float) -> ConeRepresentation:
    """Cone of degree-``d`` polynomials nonnegative on ``[a, b]``."""
    d = int(d)
    if d < 0:
        raise ValueError("degree must be nonnegative")
    a, b = float(a), float(b)
    if not a < b:
        raise ValueError(f"interval requires a < b, got [{a}, {b}]")
    if d % 2 == 0:
        m = d // 2
        nX, nY = m + 1, m
        FX = _hankel_maps(nX, d, 0)
        FY = (-a * b) * _hankel_maps(nY, d, 0) + (a + b) * _hankel_maps(nY, d, 1) - _hankel_maps(nY, d, 2)
    else:
        m = (d - 1) // 2
        nX = nY = m + 1
        FX = -a * _hankel_maps(nX, d, 0) + _hankel_maps(nX, d, 1)
        FY = b * _hankel_maps(nY, d, 0) - _hankel_maps(nY, d, 1)
    return ConeRepresentation(d, (a, b), (nX, nY), (FX, FY))


@dataclass(frozen=True)
class SpaceConeSet:
    """One interval cone per proper interval and one point constraint per singleton."""

    degree: int
    intervals: tuple
    singletons: tuple

    def contains(self, p: Polynomial, tol: float = 1e-8) -> bool:
        """Numerical membership check on a fine grid plus critical points."""
        return _min_on_space(p, self)[1] >= -tol * max(1.0, p.max_abs_coeff())


def represent_space(d: int, space: DesignSpace) -> SpaceConeSet:
    reps = tuple(represent_interval(d, a, b) for a, b in space.proper)
    return SpaceConeSet(int(d), reps, tuple(space.singletons))


# --------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class Certificate:
    """Outcome of :func:`certify_nonneg`.

    ``factors`` lists monomial-form ``(X, Y)`` per proper interval when
    ``certified``; otherwise ``witness`` is a point with ``p(witness) < 0``.
    """

    certified: bool
    factors: tuple = ()
    witness: float | None = None
    value: float | None = None
    max_error: float | None = None


def _min_on_interval(p: Polynomial, a: float, b: float):
    pts = [np.linspace(a, b, 2001)]
    if p.degree >= 2:
        crit = companion_roots(p.deriv())
        crit = crit[np.abs(crit.imag) <= 1e-7 * (1 + np.abs(crit))].real
        pts.append(crit[(crit >= a) & (crit <= b)])
    t = np.concatenate(pts)
    v = p(t)
    j = int(np.argmin(v))
    return float(t[j]), float(v[j])


def _min_on_space(p: Polynomial, cones: SpaceConeSet):
    best = (None, np.inf)
    for rep in cones.intervals:
        cand = _min_on_interval(p, *rep.interval)
        if cand[1] < best[1]:
            best = cand
    for t0 in cones.singletons:
        v = float(p(t0))
        if v < best[1]:
            best = (t0, v)
    return best


def _gram_for_interval(coeffs, rep: ConeRepresentation, tol: float):
    """Gram matrices for the monomial coefficient vector ``coeffs`` on ``rep``."""
    from . import sdpsolver as sdp

    nX, nY = rep.block_dims
    FX, FY = rep.coeff_maps
    blocks = [sdp.BlockSpec(sdp.PSD, nX)]
    A = [FX]
    if nY:
        blocks.append(sdp.BlockSpec(sdp.PSD, nY))
        A.append(FY)
    # a tiny trace objective keeps the Gram matrices bounded
    c = [1e-9 * np.eye(spec.size) for spec in blocks]
    sol = sdp.solve(sdp.SdpProblem(blocks, c, A, coeffs), sdp.SolverSettings(tol=tol))
    return sol, sol.x[0], (sol.x[1] if nY else np.zeros((0, 0)))


def certify_nonneg(p: Polynomial, space: DesignSpace, tol: float = 1e-6) -> Certificate:
    """Certify ``p >= 0`` on ``space`` or exhibit a point where it is negative.

    The Gram matrices are computed for ``p + shift`` with a shift of
    ``1e-3 * tol`` times the coefficient scale, so polynomials that touch zero
    (double roots, endpoint roots) still have strictly feasible certificates;
    the returned factors reproduce ``p`` within ``tol``.

    Raises
    ------
    CertificationError
        When the SDP solver reports a numerical failure.
    """
    if p.basis != MONOMIAL:
        raise ValueError("certify_nonneg expects a polynomial in the monomial basis")
    p = as_monomial(p)
    d = max(p.degree, 0)
    cones = represent_space(d, space)
    t_min, v_min = _min_on_space(p, cones)
    if v_min < -1e-8:
        return Certificate(False, witness=t_min, value=v_min)
    scale = max(1.0, p.max_abs_coeff())
    shift = 1e-3 * tol * scale
    factors = []
    worst = 0.0
    coeffs = np.zeros(d + 1)
    coeffs[: p.coeffs.size] = p.coeffs
    for rep in cones.intervals:
        shifted = coeffs.copy()
        shifted[0] += shift
        sol, Xm, Ym = _gram_for_interval(shifted, rep, 1e-10)
        if sol.status.value in ("NumError", "IterLimit") and not (sol.pinf < 1e-8 and sol.gap < 1e-6):
            raise CertificationError(f"solver returned {sol.status.value} on {rep.interval}")
        if sol.status.value == "Infeasible":
            return Certificate(False, witness=t_min, value=v_min)
        err = float(np.max(np.abs(rep.coefficients(Xm, Ym) - coeffs)))
        worst = max(worst, err)
        factors.append((Xm, Ym))
    if worst > tol * scale:
        raise CertificationError(f"certificate reproduces p only within {worst:.2e} scale {scale:.2e}")
    return Certificate(True, factors=tuple(factors), max_error=worst)
