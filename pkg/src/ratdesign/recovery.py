"""Weights for a given support, optimality checks and a grid oracle.

Weights solve the finite-design problem

    maximize z  subject to  A_i(N) + B_i z + C_i(u) + D_i >= 0,
                            N = sum_j lambda_j M(t_j)        (no K)
                            sum_j lambda_j M(t_j) >= K N K^T (with K),
                            lambda >= 0,  sum_j lambda_j = 1,

where with a coefficient matrix ``K`` the criterion acts on the information
matrix ``(K^T M^- K)^-1`` of ``K^T theta``, the Loewner-largest ``N`` with
``M >= K N K^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sdpsolver as sdp
from .criteria import DIRECT, CriterionRepresentation, max_feasible_z
from .exprmodel import RegressionModel
from .polycore import DesignSpace, Polynomial, companion_roots, merge_close

PRUNE = 1e-7
SPARSIFY = 1e-4  # grid-oracle weights below this fraction of the largest are retried without


class RecoveryError(RuntimeError):
    """Weight recovery failed."""


@dataclass(frozen=True)
class Design:
    """Finitely supported probability measure on the design space."""

    points: tuple
    weights: tuple
    phi_value: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.size != w.size or pts.size == 0:
            raise ValueError("a design needs as many weights as points, and at least one point")
        order = np.argsort(pts)
        pts, w = pts[order], w[order]
        if np.any(w < -1e-12):
            raise ValueError("design weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"design weights sum to {w.sum():.12g}, not 1")
        if pts.size > 1 and np.min(np.diff(pts)) <= 1e-7:
            raise ValueError("design points must be pairwise distinct")
        object.__setattr__(self, "points", tuple(float(v) for v in pts))
        object.__setattr__(self, "weights", tuple(float(v) for v in np.maximum(w, 0.0)))
        object.__setattr__(self, "phi_value", float(self.phi_value))

    @property
    def size(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {"points": list(self.points), "weights": list(self.weights), "phi_value": self.phi_value}


def reduced_information(M, K=None) -> np.ndarray:
    """``(K^T M^+ K)^-1``, or ``M`` itself without ``K``."""
    M = np.asarray(M, dtype=float)
    if K is None:
        return M
    K = np.asarray(K, dtype=float)
    G = K.T @ np.linalg.pinv(M, rcond=1e-12) @ K
    C = np.linalg.inv(0.5 * (G + G.T))
    return 0.5 * (C + C.T)


def criterion_value(rep: CriterionRepresentation, X) -> float:
    """``phi(X)`` directly for the built-in criteria, through the LMI otherwise."""
    direct = DIRECT.get(rep.name)
    if direct is not None:
        return direct(X)
    return max_feasible_z(rep, X)


def design_value(model: RegressionModel, points, weights, rep: CriterionRepresentation, K=None) -> float:
    """Criterion value of a design recomputed from its Fisher matrix."""
    M = model.information(np.asarray(points, dtype=float), np.asarray(weights, dtype=float))
    try:
        X = reduced_information(M, K)
    except np.linalg.LinAlgError:
        return -np.inf
    return criterion_value(rep, X)


def _weight_problem(model: RegressionModel, pts, rep: CriterionRepresentation, K=None):
    """LMI in ``(z, u, lambda[, N])``; returns the builder and the lambda slice."""
    n = pts.size
    Ms = model.point_information(pts)
    m = model.m
    s = rep.m
    tri = [(p, q) for p in range(s) for q in range(p, s)] if K is not None else []
    nl = 1 + rep.l
    nv = nl + n + len(tri)
    lam = slice(nl, nl + n)
    lb = sdp.LmiBuilder(nv)
    for blk in rep.blocks:
        k = blk.size
        F = np.zeros((nv, k, k))
        F[0] = -blk.B
        F[1:nl] = -blk.C
        if K is None:
            for j in range(n):
                F[nl + j] = -blk.apply_A(Ms[j])
        else:
            for r, (p, q) in enumerate(tri):
                E = np.zeros((s, s))
                E[p, q] = E[q, p] = 1.0
                F[nl + n + r] = -blk.apply_A(E)
        lb.psd(blk.D, F)
    if K is not None:
        F = np.zeros((nv, m, m))
        F[lam] = -Ms
        for r, (p, q) in enumerate(tri):
            E = np.zeros((s, s))
            E[p, q] = E[q, p] = 1.0
            F[nl + n + r] = K @ E @ K.T
        lb.psd(np.zeros((m, m)), F)
    G = np.zeros((nv, n))
    G[lam] = -np.eye(n)
    lb.nonneg(np.zeros(n), G)
    G = np.zeros((nv, 1))
    G[lam, 0] = 1.0
    lb.equal(np.ones(1), G)
    obj = np.zeros(nv)
    obj[0] = 1.0
    lb.maximize(obj)
    return lb, lam


def _solve_weights(model, pts, rep, K, tol):
    lb, lam = _weight_problem(model, pts, rep, K)
    sol = sdp.solve(lb.build(), sdp.SolverSettings(tol=tol, max_iters=200))
    if sol.status != sdp.Status.OPTIMAL and not (sol.pinf < 1e-7 and sol.dinf < 1e-7 and sol.gap < 1e-7):
        raise RecoveryError(f"weight SDP ended with status {sol.status.value} (gap {sol.gap:.2e})")
    return float(sol.y[0]), np.asarray(sol.y[lam], dtype=float)


def recover_weights(
    model: RegressionModel,
    support,
    rep: CriterionRepresentation,
    K=None,
    tol: float = 1e-10,
    prune: float = PRUNE,
) -> Design:
    """Optimal weights on ``support``; weights below ``prune`` are dropped.

    ``phi_value`` is the optimal ``z`` of the weight SDP.  After pruning the
    SDP is solved once more on the surviving points so that the returned
    weights are optimal for the returned support.

    Raises
    ------
    RecoveryError
        Empty support, points outside the space or a failed solve.
    """
    pts = np.unique(np.asarray(support, dtype=float).ravel())
    if pts.size == 0:
        raise RecoveryError("support is empty")
    bad = [t for t in pts if not model.space.contains(t, 1e-9)]
    if bad:
        raise RecoveryError(f"support points outside the design space: {bad}")
    K = None if K is None else np.asarray(K, dtype=float)
    z, lam = _solve_weights(model, pts, rep, K, tol)
    keep = lam > prune
    if not np.any(keep):
        raise RecoveryError("all weights vanished")
    if not np.all(keep):
        pts = pts[keep]
        z, lam = _solve_weights(model, pts, rep, K, tol)
        keep = lam > prune
        pts, lam = pts[keep], lam[keep]
    lam = np.maximum(lam, 0.0)
    return Design(tuple(pts), tuple(lam / lam.sum()), z)


# --------------------------------------------------------------------------
# support candidates


def support_candidates(pi: Polynomial, space: DesignSpace, root_tol: float = 1e-4) -> list:
    """Points of ``space`` where ``pi`` may vanish.

    Critical points of ``pi`` inside the proper intervals with
    ``|pi| <= root_tol * max|coeff|`` (interior roots of a nonnegative
    polynomial are double roots), plus every interval endpoint and singleton.
    The weight SDP decides which candidates carry mass.
    """
    scale = pi.max_abs_coeff()
    out = list(space.endpoints)
    if pi.degree >= 2:
        lo, hi = space.hull
        width = max(hi - lo, 1.0)
        r = companion_roots(pi.deriv())
        r = r[np.abs(r.imag) <= 1e-6 * width].real
        for a, b in space.proper:
            inside = r[(r > a) & (r < b)]
            out.extend(float(t) for t in inside if abs(pi(t)) <= root_tol * scale)
    return merge_close(out, 1e-7 * max(1.0, space.hull[1] - space.hull[0]), anchors=space.endpoints)


# --------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    phi_primal: float
    dual_y: float
    gap: float
    max_pi_support: float
    min_pi_grid: float
    pi_scale: float
    support_size: int
    support_bound: int
    bound_satisfied: bool
    checks: dict
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items()}
        out["checks"] = dict(self.checks)
        out["notes"] = list(self.notes)
        out["passed"] = self.passed
        return out

    def lines(self) -> list:
        names = {
            "a": "pi vanishes on the support",
            "b": "pi nonnegative on the space",
            "c": "criterion value equals dual bound",
            "d": "support size within bound",
        }
        vals = {
            "a": f"max |pi(t_j)| = {self.max_pi_support:.2e}",
            "b": f"min pi = {self.min_pi_grid:.2e}",
            "c": f"phi = {self.phi_primal:.10g}, y = {self.dual_y:.10g}",
            "d": f"{self.support_size} <= {self.support_bound}",
        }
        return [f"({k}) {'PASS' if ok else 'FAIL'}  {names[k]}: {vals[k]}" for k, ok in self.checks.items()]


def verify_design(
    model: RegressionModel,
    design: Design,
    rep: CriterionRepresentation,
    pi: Polynomial,
    y: float,
    K=None,
    support_bound: int | None = None,
) -> VerificationReport:
    """Check a design against the support polynomial and the dual value ``y``.

    (a) ``|pi(t_j)| <= 1e-5 ||pi||`` on the support, (b) ``pi >= -1e-6 ||pi||``
    on 2001 points per interval, (c) ``|phi - y| <= 1e-5 (1 + |y|)`` with
    ``phi`` recomputed from the Fisher matrix, (d) support size within the
    bound.  ``||pi||`` is the largest absolute coefficient.  Points with
    weight at most ``1e-7`` are dropped first and noted.
    """
    from .assembler import support_bound as bound_of

    notes = []
    pts = np.asarray(design.points, dtype=float)
    w = np.asarray(design.weights, dtype=float)
    keep = w > PRUNE
    if not np.all(keep):
        notes.append(f"dropped {int(np.sum(~keep))} support point(s) with weight <= {PRUNE:g}")
        pts, w = pts[keep], w[keep] / w[keep].sum()
    bound = bound_of(model) if support_bound is None else int(support_bound)
    scale = max(pi.max_abs_coeff(), 1e-300)
    grid = np.concatenate([np.linspace(a, b, 2001) for a, b in model.space.proper] + [np.asarray(model.space.singletons)])
    max_sup = float(np.max(np.abs(pi(pts))) / scale)
    min_grid = float(np.min(pi(grid)) / scale)
    phi = design_value(model, pts, w, rep, K)
    y = float(y)
    checks = {
        "a": bool(max_sup <= 1e-5),
        "b": bool(min_grid >= -1e-6),
        "c": bool(abs(phi - y) <= 1e-5 * (1.0 + abs(y))),
        "d": bool(pts.size <= bound),
    }
    return VerificationReport(
        phi_primal=phi,
        dual_y=y,
        gap=y - phi,
        max_pi_support=max_sup,
        min_pi_grid=min_grid,
        pi_scale=scale,
        support_size=int(pts.size),
        support_bound=bound,
        bound_satisfied=checks["d"],
        checks=checks,
        notes=notes,
    )


# --------------------------------------------------------------------------
# grid oracle


def grid_oracle(model: RegressionModel, rep: CriterionRepresentation, N: int = 401, K=None) -> Design:
    """Optimal design restricted to ``N`` equispaced points per proper interval."""
    if int(N) < 2:
        raise ValueError("the grid needs at least 2 points per interval")
    design = recover_weights(model, model.space.grid(int(N)), rep, K=K, tol=1e-9)
    # interior-point weights on a fine grid smear small masses around each
    # support point; drop them and re-solve while the value does not degrade
    for _ in range(5):
        w = np.asarray(design.weights)
        keep = w >= SPARSIFY * w.max()
        if keep.all():
            break
        pts = np.asarray(design.points)[keep]
        try:
            sparse = recover_weights(model, pts, rep, K=K, tol=1e-10)
        except RecoveryError:
            break
        if sparse.phi_value < design.phi_value - 1e-7 * max(1.0, abs(design.phi_value)):
            break
        design = sparse
    return design


def clusters(design: Design, radius: float) -> list:
    """Merge support points closer than ``radius``; returns ``(location, mass)`` pairs.

    Locations are weight-averaged within a cluster, which is how a grid
    design approximates a support point lying between grid nodes.
    """
    out = []
    for t, w in zip(design.points, design.weights):
        if out and t - out[-1][2] <= radius:
            loc, mass, _ = out[-1]
            out[-1] = [(loc * mass + t * w) / (mass + w), mass + w, t]
        else:
            out.append([t, w, t])
    return [(loc, mass) for loc, mass, _ in out]
