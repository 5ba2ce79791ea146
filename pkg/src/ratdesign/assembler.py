"""Assembly of the support-finding SDP.

The program solved is

    minimize    y
    subject to  sum_i <W_i, B_i> = -1,   sum_i C_i^*(W_i) = 0,   W_i >= 0,
                pi = den * (y - sum_i <W_i, A_i(M(t)) + D_i>),
                pi >= 0 on the design space,

where ``den`` is a polynomial multiple of every denominator appearing in
``M(t) = omega(t) f(t) f(t)^T``.  With a coefficient matrix ``K`` the
criterion acts on ``s x s`` matrices and an extra ``V >= 0`` enters through
``K^T V K >= sum_i A_i^*(W_i)`` and ``pi = den * (y - <V, M(t)> - sum_i <W_i, D_i>)``.

Numerically ``pi`` is carried as Legendre coefficients on the hull of the
design space.  The identity defining ``pi`` is imposed at ``d + 1``
Chebyshev nodes of the hull, and nonnegativity uses the evaluation form of
:mod:`nncone` on each interval, so no monomial expansion of high degree is
ever formed.  :func:`pi_polynomial` gives the same map in monomial
coefficients by exact polynomial arithmetic, for inspection and testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from . import sdpsolver as sdp
from .criteria import CriterionRepresentation, probe_matrix, represent
from .exprmodel import RegressionModel
from .nncone import represent_space
from .polycore import (
    LEGENDRE,
    Polynomial,
    RationalFunction,
    _factor_product,
    _merge_factors,
    _subtract_factors,
    lagrange_nodes,
    poly_arith,
)

MAX_DEGREE = 64


class AssemblyError(ValueError):
    """The design problem cannot be turned into a well-posed SDP."""


class AdmissibilityError(AssemblyError):
    pass


class EstimabilityError(AssemblyError):
    pass


@dataclass(frozen=True)
class DesignProblem:
    """Model, criterion (name or representation) and optional ``m x s`` matrix ``K``."""

    model: RegressionModel
    criterion: object = "E"
    K: np.ndarray | None = None

    def __post_init__(self):
        if self.K is not None:
            K = np.atleast_2d(np.asarray(self.K, dtype=float))
            if K.shape[0] != self.model.m:
                raise EstimabilityError(f"K must have {self.model.m} rows, got {K.shape[0]}")
            sv = np.linalg.svd(K, compute_uv=False)
            if np.sum(sv > 1e-10 * max(1.0, sv[0])) != K.shape[1]:
                raise EstimabilityError("K must have full column rank")
            object.__setattr__(self, "K", K)

    @property
    def s(self) -> int:
        return self.model.m if self.K is None else self.K.shape[1]

    def representation(self) -> CriterionRepresentation:
        if isinstance(self.criterion, CriterionRepresentation):
            if self.criterion.m != self.s:
                raise AssemblyError(f"criterion acts on {self.criterion.m}x{self.criterion.m} matrices, expected {self.s}")
            return self.criterion
        return represent(str(self.criterion), self.s)


# --------------------------------------------------------------------------
# moment functions, multiplier and degrees


def moment_functions(model: RegressionModel) -> np.ndarray:
    """``m x m`` object array with entries ``omega * f_i * f_j``."""
    m = model.m
    out = np.empty((m, m), dtype=object)
    for i in range(m):
        for j in range(i, m):
            out[i, j] = out[j, i] = model.weight * model.basis[i] * model.basis[j]
    return out


def _entry_factors(model, i, j):
    return _merge_factors(model.weight.den_factors, model.basis[i].den_factors, model.basis[j].den_factors)


def multiplier_factors(model: RegressionModel):
    """Factored least common multiple of the denominators of ``omega f_i f_j``.

    When ``omega`` and the ``f_i`` have coprime denominators this equals
    ``lcm(den(omega), den(f_1^2), ..., den(f_m^2))``; shared factors are
    counted with the multiplicity they actually reach in the entries.
    """
    m = model.m
    groups = [_entry_factors(model, i, j) for i in range(m) for j in range(i, m)]
    return _merge_factors(*groups, mode="max")


def multiplier(model: RegressionModel) -> Polynomial:
    return _factor_product(multiplier_factors(model))


def pi_degree(model: RegressionModel, rep: CriterionRepresentation | None = None) -> int:
    """``d_den + (n_omega - d_omega + 2 max_i (n_i - d_i))_+``."""
    w = model.weight
    growth = w.num_degree - w.den_degree + 2 * max(f.num_degree - f.den_degree for f in model.basis)
    return multiplier(model).degree + max(growth, 0)


def support_bound(model: RegressionModel, rep: CriterionRepresentation | None = None) -> int:
    d = pi_degree(model, rep)
    k1, k2 = model.space.k1, model.space.k2
    return min((k1 + 2 * k2 + d) // 2, d)


def scaled_moments(model: RegressionModel, t, factors=None) -> np.ndarray:
    """``den(t) * M(t)`` evaluated without dividing by any denominator.

    Each entry is ``num(omega) num(f_i) num(f_j)`` times the cofactor of the
    entry's denominator in the multiplier; shape ``(len(t), m, m)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    factors = multiplier_factors(model) if factors is None else factors
    m = model.m
    nums = [f.num(t) for f in model.basis]
    wn = model.weight.num(t)
    G = np.empty((t.size, m, m))
    for i in range(m):
        for j in range(i, m):
            cof = _factor_product(_subtract_factors(factors, _entry_factors(model, i, j)))
            G[:, i, j] = G[:, j, i] = wn * nums[i] * nums[j] * cof(t)
    return G


# --------------------------------------------------------------------------
# assembled problem


@dataclass
class AssembledSdp:
    problem: sdp.SdpProblem
    pi_index_map: dict
    d: int
    den_poly: Polynomial
    den_factors: tuple
    rep: CriterionRepresentation
    design: DesignProblem
    hull: tuple
    rows: dict = field(default_factory=dict)
    scale: float = 1.0
    transforms: dict = field(default_factory=dict)

    @property
    def model(self) -> RegressionModel:
        return self.design.model


def _sym_units(s):
    """Symmetric unit matrices ``(E_pq + E_qp)/2`` for ``p <= q``."""
    out = []
    for p in range(s):
        for q in range(p, s):
            E = np.zeros((s, s))
            E[p, q] += 0.5
            E[q, p] += 0.5
            out.append(E)
    return out


def legendre_rows(d: int, hull, t) -> np.ndarray:
    """Matrix with ``P_n(s(t_k))`` in row ``k``: evaluation of a Legendre series on ``hull``."""
    lo, hi = hull
    s = (2.0 * np.asarray(t, dtype=float) - lo - hi) / (hi - lo)
    return npleg.legvander(s, d)


def _assemble(
    design: DesignProblem, rep: CriterionRepresentation, check: bool = True, scale: float | None = None
) -> AssembledSdp:
    model = design.model
    space = model.space
    subsystem = design.K is not None
    d = pi_degree(model, rep)
    if d > MAX_DEGREE:
        raise AssemblyError(f"degree of pi is {d}, above the supported maximum {MAX_DEGREE}")
    probe, M_probe = _check_problem(design, rep) if check else (None, None)
    if scale is None:
        scale = value_scale(rep, probe)
    factors = multiplier_factors(model)
    den = _factor_product(factors)
    hull = space.hull
    if hull[0] == hull[1]:
        hull = (hull[0] - 1.0, hull[1] + 1.0)
    m, s_dim = model.m, design.s

    # blocks: y, pi, W_1..W_p, [V, S], cone X/Y per interval, singleton slacks
    blocks = [sdp.BlockSpec(sdp.FREE, 1), sdp.BlockSpec(sdp.FREE, d + 1)]
    names = ["y", "pi"]
    w_idx = []
    for i, blk in enumerate(rep.blocks):
        w_idx.append(len(blocks))
        blocks.append(sdp.BlockSpec(sdp.PSD, blk.size))
        names.append(f"W{i + 1}")
    v_idx = s_idx = None
    if subsystem:
        v_idx = len(blocks)
        blocks.append(sdp.BlockSpec(sdp.PSD, m))
        names.append("V")
        s_idx = len(blocks)
        blocks.append(sdp.BlockSpec(sdp.PSD, s_dim))
        names.append("S")
    cones = represent_space(d, space)
    cone_idx = []
    for j, crep in enumerate(cones.intervals):
        xi = len(blocks)
        blocks.append(sdp.BlockSpec(sdp.PSD, crep.block_dims[0]))
        names.append(f"X{j + 1}")
        yi = None
        if crep.block_dims[1]:
            yi = len(blocks)
            blocks.append(sdp.BlockSpec(sdp.PSD, crep.block_dims[1]))
            names.append(f"Y{j + 1}")
        cone_idx.append((xi, yi))
    single_idx = None
    if cones.singletons:
        single_idx = len(blocks)
        blocks.append(sdp.BlockSpec(sdp.NONNEG, len(cones.singletons)))
        names.append("point")

    T = _dual_scalings(design, rep, probe, M_probe)
    transforms = {}
    for i, wi in enumerate(w_idx):
        transforms[wi] = T["W"][i]
    if subsystem:
        transforms[v_idx], transforms[s_idx] = T["V"], T["S"]

    def cong(idx, F):
        Tm = transforms[idx]
        return Tm.T @ F @ Tm

    units = _sym_units(s_dim) if subsystem else []
    nodes = lagrange_nodes(hull[0], hull[1], d + 1)
    n_rows = 1 + rep.l + len(units) + (d + 1) + (d + 1) * len(cones.intervals) + len(cones.singletons)
    A = [np.zeros((n_rows, spec.size, spec.size)) if spec.kind == sdp.PSD else np.zeros((n_rows, spec.size)) for spec in blocks]
    b = np.zeros(n_rows)
    rows = {}
    r = 0
    # normalisation sum <W_i, B_i> = -1
    for wi, blk in zip(w_idx, rep.blocks):
        A[wi][r] = scale * cong(wi, blk.B)
    b[r] = -1.0
    rows["B"] = r
    r += 1
    # sum C_i^*(W_i) = 0
    rows["C"] = (r, r + rep.l)
    for wi, blk in zip(w_idx, rep.blocks):
        for q in range(rep.l):
            A[wi][r + q] = cong(wi, blk.C[q])
    r += rep.l
    # K^T V K - sum A_i^*(W_i) - S = 0
    rows["K"] = (r, r + len(units))
    for E in units:
        A[v_idx][r] = cong(v_idx, design.K @ E @ design.K.T)
        for wi, blk in zip(w_idx, rep.blocks):
            A[wi][r] = -cong(wi, blk.apply_A(E))
        A[s_idx][r] = -cong(s_idx, E)
        r += 1
    # pi(t_k) - den(t_k) y + <V, G_k> or sum <W_i, A_i(G_k)> + den(t_k) sum <W_i, D_i> = 0
    rows["Pi"] = (r, r + d + 1)
    G = scaled_moments(model, nodes, factors)
    dn = den(nodes)
    L = legendre_rows(d, hull, nodes)
    for k in range(d + 1):
        A[1][r] = L[k]
        A[0][r, 0] = -dn[k]
        if subsystem:
            A[v_idx][r] = cong(v_idx, G[k])
            for wi, blk in zip(w_idx, rep.blocks):
                A[wi][r] = cong(wi, dn[k] * blk.D)
        else:
            for wi, blk in zip(w_idx, rep.blocks):
                A[wi][r] = cong(wi, blk.apply_A(G[k]) + dn[k] * blk.D)
        r += 1
    # nonnegativity on each interval in evaluation form
    rows["cone"] = []
    for crep, (xi, yi) in zip(cones.intervals, cone_idx):
        form = crep.evaluation_form
        Lc = legendre_rows(d, hull, form.nodes)
        rows["cone"].append((r, r + d + 1))
        for k in range(d + 1):
            A[1][r] = Lc[k]
            A[xi][r] = -form.GX[k]
            if yi is not None:
                A[yi][r] = -form.GY[k]
            r += 1
    if cones.singletons:
        Ls = legendre_rows(d, hull, cones.singletons)
        rows["point"] = (r, r + len(cones.singletons))
        for k in range(len(cones.singletons)):
            A[1][r] = Ls[k]
            A[single_idx][r, k] = -1.0
            r += 1
    c = [np.zeros((spec.size, spec.size)) if spec.kind == sdp.PSD else np.zeros(spec.size) for spec in blocks]
    c[0][0] = 1.0
    problem = sdp.SdpProblem(blocks, c, A, b, names)
    index = {"y": 0, "pi": 1, "W": w_idx, "V": v_idx, "S": s_idx, "cone": cone_idx, "point": single_idx}
    return AssembledSdp(problem, index, d, den, factors, rep, design, hull, rows, float(scale), transforms)


def _inv_sqrt(H, floor=1e-10):
    w, U = np.linalg.eigh(0.5 * (H + H.T))
    w = np.maximum(w, floor * max(float(w[-1]), 1e-300))
    return (U / np.sqrt(w)) @ U.T


def _dual_scalings(design: DesignProblem, rep: CriterionRepresentation, probe, M_probe) -> dict:
    """Congruence scalings ``T`` for the dual blocks (``W_i = scale * T W~_i T^T``).

    Each ``W_i`` is scaled by the inverse square root of its block value at
    a centred feasible point of the probe design, and ``V`` by that of the
    probe information matrix.  In these coordinates the optimal dual blocks
    and ``pi`` share one magnitude, which removes the cancellation that an
    ill-conditioned basis otherwise causes in ``<W, M(t)>``.
    """
    from .criteria import centered_blocks

    out = {"W": [np.eye(blk.size) for blk in rep.blocks], "V": None, "S": None}
    if probe is not None:
        try:
            out["W"] = [_inv_sqrt(H) for H in centered_blocks(rep, probe)]
        except RuntimeError:
            pass
    if design.K is not None:
        m = design.model.m
        if M_probe is None:
            out["V"], out["S"] = np.eye(m), np.eye(design.s)
        else:
            TV = _inv_sqrt(M_probe)
            KtMK = design.K.T @ TV @ TV @ design.K
            out["V"] = TV
            out["S"] = np.linalg.inv(_inv_sqrt(KtMK))
    return out


def _check_problem(design: DesignProblem, rep: CriterionRepresentation):
    from .criteria import admissibility_probe

    model = design.model
    bound = support_bound(model, rep)
    if design.K is None:
        res = admissibility_probe(rep, model, bound)
        if not res.passed:
            raise AdmissibilityError(
                f"criterion {rep.name} is not admissible for this model (probe margin {res.margin:.3g})"
            )
        return res.probe, res.probe
    space = model.space
    n = max(2 * model.m, bound)
    pts = np.concatenate([np.linspace(a, b, n) for a, b in space.proper] + [np.array(space.singletons, dtype=float)])
    M = model.information(pts, np.full(pts.size, 1.0 / pts.size))
    tol = 1e-10 * max(1.0, np.linalg.norm(M, 2))
    if np.linalg.matrix_rank(np.hstack([M, design.K]), tol) != np.linalg.matrix_rank(M, tol):
        raise EstimabilityError("range(K) is not contained in the range of the information matrix")
    # admissibility for the reduced information (K^T M^+ K)^-1
    C = np.linalg.inv(design.K.T @ np.linalg.pinv(M, rcond=1e-12) @ design.K)
    res = probe_matrix(rep, 0.5 * (C + C.T))
    if not res.passed:
        raise AdmissibilityError(f"criterion {rep.name} is not admissible for K^T theta (probe margin {res.margin:.3g})")
    return res.probe, M


def value_scale(rep: CriterionRepresentation, probe) -> float:
    """Magnitude of the criterion at the probe design, used as the objective unit."""
    if probe is None:
        return 1.0
    from .criteria import max_feasible_z

    try:
        z = max_feasible_z(rep, probe)
    except RuntimeError:
        return 1.0
    if not np.isfinite(z) or z == 0.0:
        return 1.0
    return float(min(max(abs(z), 1e-12), 1e12))


def assemble_full(design: DesignProblem, rep: CriterionRepresentation | None = None, check: bool = True) -> AssembledSdp:
    if design.K is not None:
        raise AssemblyError("assemble_full takes a problem without K; use assemble_subsystem")
    return _assemble(design, rep or design.representation(), check)


def assemble_subsystem(design: DesignProblem, rep: CriterionRepresentation | None = None, check: bool = True) -> AssembledSdp:
    if design.K is None:
        raise AssemblyError("assemble_subsystem needs a coefficient matrix K")
    return _assemble(design, rep or design.representation(), check)


def assemble(design: DesignProblem, rep: CriterionRepresentation | None = None, check: bool = True) -> AssembledSdp:
    return _assemble(design, rep or design.representation(), check)


# --------------------------------------------------------------------------
# reading results


class DegeneratePi(ArithmeticError):
    """The optimal ``pi`` is numerically the zero polynomial."""


def pi_coefficients(asdp: AssembledSdp, sol: sdp.SdpSolution) -> np.ndarray:
    """Legendre coefficients of ``pi`` on the hull, in the caller's units."""
    return asdp.scale * np.asarray(sol.x[asdp.pi_index_map["pi"]], dtype=float)


def optimal_value(asdp: AssembledSdp, sol: sdp.SdpSolution) -> float:
    return asdp.scale * float(sol.x[asdp.pi_index_map["y"]][0])


def extract_pi(asdp: AssembledSdp, sol: sdp.SdpSolution) -> Polynomial:
    """Optimal ``pi`` (Legendre basis on the hull), normalised to max-abs coefficient one.

    Raises
    ------
    DegeneratePi
        When ``max |pi_k| < 1e-7 (1 + |y|)``.
    """
    c = pi_coefficients(asdp, sol)
    y = optimal_value(asdp, sol)
    scale = float(np.max(np.abs(c)))
    if scale < 1e-7 * (1.0 + abs(y)):
        raise DegeneratePi(f"pi vanishes numerically (max coefficient {scale:.2e})")
    return Polynomial(c / scale, LEGENDRE, asdp.hull)


def _unscale_block(asdp: AssembledSdp, sol: sdp.SdpSolution, idx) -> np.ndarray:
    T = asdp.transforms.get(idx)
    X = sol.x[idx]
    return asdp.scale * (X if T is None else T @ X @ T.T)


def dual_matrices(asdp: AssembledSdp, sol: sdp.SdpSolution) -> list:
    """The ``W_i`` in the caller's coordinates."""
    return [_unscale_block(asdp, sol, i) for i in asdp.pi_index_map["W"]]


def dual_V(asdp: AssembledSdp, sol: sdp.SdpSolution):
    """``V`` of the subsystem formulation, or ``None``."""
    i = asdp.pi_index_map["V"]
    return None if i is None else _unscale_block(asdp, sol, i)


def pi_polynomial(asdp: AssembledSdp, y: float, Ws, V=None) -> Polynomial:
    """``Pi(y, W_1, ..., W_p[, V])`` in monomial coefficients via polynomial arithmetic."""
    model = asdp.model
    factors = asdp.den_factors
    rep = asdp.rep
    entries = moment_functions(model)
    if V is None:
        S = sum(blk.adjoint_A(W) for blk, W in zip(rep.blocks, Ws))
    else:
        S = np.asarray(V, dtype=float)
    const = y - sum(float(np.vdot(W, blk.D)) for blk, W in zip(rep.blocks, Ws))
    out = asdp.den_poly.scaled(const)
    m = model.m
    for i in range(m):
        for j in range(m):
            if S[i, j] != 0.0:
                out = poly_arith("sub", out, entries[i, j].times_multiple(factors).scaled(S[i, j]))
    return out


def pi_direct(asdp: AssembledSdp, y: float, Ws, t, V=None) -> np.ndarray:
    """Direct evaluation ``den(t) (y - sum <W_i, A_i(M(t)) + D_i>)`` (or the ``V`` form)."""
    model = asdp.model
    rep = asdp.rep
    t = np.atleast_1d(np.asarray(t, dtype=float))
    Mt = model.point_information(t)
    out = np.empty(t.size)
    for k in range(t.size):
        if V is None:
            val = sum(float(np.vdot(W, blk.apply_A(Mt[k]) + blk.D)) for blk, W in zip(rep.blocks, Ws))
        else:
            val = float(np.vdot(V, Mt[k])) + sum(float(np.vdot(W, blk.D)) for blk, W in zip(rep.blocks, Ws))
        out[k] = y - val
    return asdp.den_poly(t) * out


def evaluate_pi_rows(asdp: AssembledSdp, y: float, Ws, V=None) -> np.ndarray:
    """Legendre coefficients of ``Pi`` obtained from the node equations of the SDP."""
    model = asdp.model
    nodes = lagrange_nodes(asdp.hull[0], asdp.hull[1], asdp.d + 1)
    vals = pi_direct(asdp, y, Ws, nodes, V)
    return np.linalg.solve(legendre_rows(asdp.d, asdp.hull, nodes), vals)


# --------------------------------------------------------------------------
# degeneracy handling


def constant_in_span(model: RegressionModel, tol: float = 1e-8) -> bool:
    """Whether ``1`` lies (numerically) in the span of ``omega f_i f_j`` on the space."""
    t = model.space.grid(max(4 * model.m * model.m, 200))
    P = model.point_information(t)
    iu = np.triu_indices(model.m)
    F = P[:, iu[0], iu[1]]
    scale = np.linalg.norm(F, axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(F / scale, np.ones(t.size), rcond=None)
    res = np.linalg.norm(F / scale @ coef - 1.0) / np.sqrt(t.size)
    return bool(res < tol)


def pi_integral_weights(asdp: AssembledSdp) -> np.ndarray:
    """Vector ``w`` with ``w @ c = integral of pi over the design space`` for Legendre coefficients ``c``."""
    d = asdp.d
    lo, hi = asdp.hull
    half = 0.5 * (hi - lo)
    w = np.zeros(d + 1)
    for a, b in asdp.model.space.proper:
        sa = (2 * a - lo - hi) / (hi - lo)
        sb = (2 * b - lo - hi) / (hi - lo)
        for n in range(d + 1):
            e = np.zeros(n + 1)
            e[n] = 1.0
            antider = npleg.legint(e)
            w[n] += half * (npleg.legval(sb, antider) - npleg.legval(sa, antider))
    return w


def min_integral_probe(asdp: AssembledSdp, y_star: float, settings: sdp.SolverSettings, slack: float | None = None):
    """Minimise the integral of ``pi`` over the space among near-optimal points.

    Adds ``y + s = y_star + slack`` with ``s >= 0`` and replaces the objective.
    A near-zero optimum means ``pi = 0`` is (nearly) optimal and the problem
    is degenerate.
    """
    prob = asdp.problem
    slack = 1e-6 * (1.0 + abs(y_star)) if slack is None else slack
    blocks = list(prob.blocks) + [sdp.BlockSpec(sdp.NONNEG, 1)]
    A = []
    for spec, Ab in zip(prob.blocks, prob.A):
        row = np.zeros((1,) + Ab.shape[1:])
        A.append(np.concatenate([Ab, row], axis=0))
    A[0][-1, 0] = 1.0
    extra = np.zeros((prob.m + 1, 1))
    extra[-1, 0] = 1.0
    A.append(extra)
    b = np.concatenate([prob.b, [(y_star + slack) / asdp.scale]])
    c = [np.zeros_like(cb) for cb in prob.c] + [np.zeros(1)]
    w = pi_integral_weights(asdp)
    c[1] = w / max(float(np.sum(np.abs(w))), 1e-300)
    return sdp.solve(sdp.SdpProblem(blocks, c, A, b, list(prob.names) + ["slack"]), settings)


def has_constant_basis(model: RegressionModel) -> bool:
    return any(f.is_constant() for f in model.basis)


def rescale_factor(model: RegressionModel) -> float:
    """``0.5 / max |f_i|`` over a grid of the space and the non-constant ``f_i``."""
    t = model.space.grid(401)
    F = model.features(t)
    nonconst = [i for i, f in enumerate(model.basis) if not f.is_constant()]
    peak = float(np.max(np.abs(F[:, nonconst]))) if nonconst else 1.0
    return 0.5 / peak


def rescale_basis(model: RegressionModel, lam: float | None = None) -> RegressionModel:
    """Scale the non-constant basis functions by ``lam`` (default :func:`rescale_factor`).

    Models without a constant basis function are returned unchanged: for
    them a vanishing ``pi`` cannot be optimal, so no remedy is needed.
    """
    if not has_constant_basis(model):
        return model
    lam = rescale_factor(model) if lam is None else float(lam)
    if not lam > 0:
        raise ValueError("rescaling factor must be positive")
    factors = [1.0 if f.is_constant() else lam for f in model.basis]
    return model.scaled_basis(factors)
