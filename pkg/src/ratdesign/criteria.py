"""Semidefinite representations of optimality criteria.

A representation certifies ``phi(X) >= z`` through linear matrix
inequalities

    A_i(X) + B_i z + C_i(u) + D_i  >= 0   (PSD),   i = 1..p,

in an auxiliary vector ``u`` of length ``l``.  Every block stores

* ``A`` with shape ``(m, m, k, k)``: ``A_i(X) = sum_pq X_pq A[p, q]``,
* ``B`` and ``D`` with shape ``(k, k)``,
* ``C`` with shape ``(l, k, k)``: ``C_i(u) = sum_j u_j C[j]``.

All criteria are maximised; A-optimality is stored as ``-tr(M^-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sdpsolver as sdp


@dataclass(frozen=True)
class Block:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def size(self) -> int:
        return self.B.shape[0]

    def apply_A(self, X) -> np.ndarray:
        return np.tensordot(np.asarray(X, dtype=float), self.A, axes=([0, 1], [0, 1]))

    def adjoint_A(self, W) -> np.ndarray:
        """``A^*(W)``, the ``m x m`` matrix with entries ``<A[p, q], W>``."""
        return np.tensordot(self.A, np.asarray(W, dtype=float), axes=([2, 3], [0, 1]))

    def adjoint_C(self, W) -> np.ndarray:
        return np.tensordot(self.C, np.asarray(W, dtype=float), axes=([1, 2], [0, 1]))

    def value(self, X, z, u) -> np.ndarray:
        out = self.apply_A(X) + z * self.B + self.D
        if self.C.shape[0]:
            out = out + np.tensordot(np.asarray(u, dtype=float), self.C, axes=1)
        return out


@dataclass(frozen=True)
class CriterionRepresentation:
    name: str
    m: int
    l: int
    blocks: tuple

    @property
    def p(self) -> int:
        return len(self.blocks)

    def holds(self, X, z, u, tol: float = 0.0) -> bool:
        """Check all block inequalities at ``(X, z, u)``."""
        return all(np.linalg.eigvalsh(blk.value(X, z, u))[0] >= -tol for blk in self.blocks)

    def min_eigs(self, X, z, u) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(blk.value(X, z, u))[0] for blk in self.blocks])


def _embed_identity(m, k):
    """``A[p, q]`` placing a symmetric ``m x m`` argument in the top-left of a ``k x k`` block."""
    A = np.zeros((m, m, k, k))
    for p in range(m):
        for q in range(m):
            A[p, q, p, q] += 0.5
            A[p, q, q, p] += 0.5
    return A


def _scalar_block(m, l, b=0.0, c=None, d=0.0):
    C = np.zeros((l, 1, 1))
    if c is not None:
        C[:, 0, 0] = c
    return Block(np.zeros((m, m, 1, 1)), np.array([[b]]), C, np.array([[d]]))


def represent_E(m: int) -> CriterionRepresentation:
    """``lambda_min(X) >= z`` iff ``X - z I >= 0``."""
    _check_m(m)
    blk = Block(_embed_identity(m, m), -np.eye(m), np.zeros((0, m, m)), np.zeros((m, m)))
    return CriterionRepresentation("E", m, 0, (blk,))


def represent_A(m: int) -> CriterionRepresentation:
    """``-tr(X^-1) >= z`` via ``[[X, e_k], [e_k^T, u_k]] >= 0`` and ``-z - sum u >= 0``."""
    _check_m(m)
    k = m + 1
    A = _embed_identity(m, k)
    blocks = []
    for j in range(m):
        D = np.zeros((k, k))
        D[j, m] = D[m, j] = 1.0
        C = np.zeros((m, k, k))
        C[j, m, m] = 1.0
        blocks.append(Block(A, np.zeros((k, k)), C, D))
    blocks.append(_scalar_block(m, m, b=-1.0, c=-np.ones(m)))
    return CriterionRepresentation("A", m, m, tuple(blocks))


def represent_D(m: int) -> CriterionRepresentation:
    """``det(X)^(1/m) >= z`` via a triangular factor and a geometric-mean tower.

    The auxiliary vector holds the lower-triangular ``L`` (row-major over
    ``i >= j``) followed by one value per internal node of a binary tree whose
    leaves are ``diag(L)``, padded with the root value up to a power of two.
    Each internal node ``tau`` with children ``c1, c2`` contributes the block
    ``[[c1, tau], [tau, c2]] >= 0`` and the root gives ``tau_root - z >= 0``.
    """
    _check_m(m)
    if m == 1:
        blk = Block(np.ones((1, 1, 1, 1)), np.array([[-1.0]]), np.zeros((0, 1, 1)), np.zeros((1, 1)))
        return CriterionRepresentation("D", 1, 0, (blk,))
    tri = [(i, j) for i in range(m) for j in range(i + 1)]
    tri_index = {ij: n for n, ij in enumerate(tri)}
    leaves = 1 << (m - 1).bit_length()
    n_internal = leaves - 1
    l = len(tri) + n_internal
    # heap numbering of internal nodes: node 0 is the root, children of n are 2n+1, 2n+2;
    # indices >= n_internal denote leaves
    node_var = {n: len(tri) + n for n in range(n_internal)}
    root = node_var[0]

    def leaf_var(leaf):
        return tri_index[(leaf, leaf)] if leaf < m else root

    def child_var(c):
        return node_var[c] if c < n_internal else leaf_var(c - n_internal)

    blocks = []
    k = 2 * m
    C = np.zeros((l, k, k))
    for (i, j), n in tri_index.items():
        C[n, i, m + j] = C[n, m + j, i] = 1.0
        if i == j:
            C[n, m + i, m + i] = 1.0
    blocks.append(Block(_embed_identity(m, k), np.zeros((k, k)), C, np.zeros((k, k))))
    for n in range(n_internal):
        C = np.zeros((l, 2, 2))
        C[child_var(2 * n + 1), 0, 0] += 1.0
        C[child_var(2 * n + 2), 1, 1] += 1.0
        C[node_var[n], 0, 1] += 1.0
        C[node_var[n], 1, 0] += 1.0
        blocks.append(Block(np.zeros((m, m, 2, 2)), np.zeros((2, 2)), C, np.zeros((2, 2))))
    c = np.zeros(l)
    c[root] = 1.0
    blocks.append(_scalar_block(m, l, b=-1.0, c=c))
    return CriterionRepresentation("D", m, l, tuple(blocks))


def _check_m(m):
    if int(m) != m or m < 1:
        raise ValueError("model dimension must be a positive integer")


# --------------------------------------------------------------------------
# direct criterion values (oracles)


def phi_E(X) -> float:
    return float(np.linalg.eigvalsh(X)[0])


def phi_A(X) -> float:
    w = np.linalg.eigvalsh(X)
    if w[0] <= 1e-14 * max(1.0, w[-1]):
        return -np.inf
    return float(-np.sum(1.0 / w))


def phi_D(X) -> float:
    w = np.linalg.eigvalsh(X)
    if w[0] <= 0:
        return 0.0
    return float(np.exp(np.mean(np.log(w))))


DIRECT = {"E": phi_E, "A": phi_A, "D": phi_D}
BUILTIN = {"E": represent_E, "A": represent_A, "D": represent_D}


def represent(name: str, m: int) -> CriterionRepresentation:
    try:
        return BUILTIN[name.upper()](m)
    except KeyError:
        raise ValueError(f"unknown criterion {name!r}; expected E, A, D or a custom representation") from None


# --------------------------------------------------------------------------
# small SDPs over (z, u)


def _lmi(rep: CriterionRepresentation, X, shift_t: bool = False):
    """LMI builder over ``(z, u[, t])`` for the blocks evaluated at fixed ``X``."""
    nv = 1 + rep.l + (1 if shift_t else 0)
    lb = sdp.LmiBuilder(nv)
    for blk in rep.blocks:
        k = blk.size
        F = np.zeros((nv, k, k))
        F[0] = -blk.B
        F[1 : 1 + rep.l] = -blk.C
        if shift_t:
            F[-1] = np.eye(k)
        lb.psd(blk.apply_A(X) + blk.D, F)
    return lb


def max_feasible_z(rep: CriterionRepresentation, X, tol: float = 1e-9) -> float:
    """Largest ``z`` for which the blocks are feasible at ``X``; ``-inf`` if none."""
    lb = _lmi(rep, X)
    obj = np.zeros(1 + rep.l)
    obj[0] = 1.0
    lb.maximize(obj)
    sol = sdp.solve(lb.build(), sdp.SolverSettings(tol=tol, max_iters=200))
    if sol.status == sdp.Status.INFEASIBLE:
        return -np.inf
    if sol.status == sdp.Status.UNBOUNDED:
        return np.inf
    if sol.status != sdp.Status.OPTIMAL and not (sol.pinf < 1e-6 and sol.dinf < 1e-6 and sol.gap < 1e-5):
        # no strictly feasible point: report as infeasible when duals blow up
        if np.max(np.abs(sol.y)) > 1e6:
            return -np.inf
        raise RuntimeError(f"criterion SDP failed with status {sol.status.value}")
    return float(sol.y[0])


def centered_blocks(rep: CriterionRepresentation, X, tol: float = 1e-1) -> list:
    """Block values at a well-centred strictly feasible ``(z, u)`` for fixed ``X``.

    The maximise-``z`` LMI is solved only loosely, so the interior-point
    iterate stays near the central path and every block is safely positive
    definite.  The matrices serve as scalings for the dual blocks of the
    design SDP.
    """
    lb = _lmi(rep, X)
    obj = np.zeros(1 + rep.l)
    obj[0] = 1.0
    lb.maximize(obj)
    sol = sdp.solve(lb.build(), sdp.SolverSettings(tol=tol, max_iters=200))
    out = []
    for S in sol.s[: len(rep.blocks)]:
        S = 0.5 * (S + S.T)
        w = np.linalg.eigvalsh(S)
        if not (np.all(np.isfinite(w)) and w[0] > 1e-12 * max(1.0, w[-1])):
            raise RuntimeError("no well-centred feasible point for the criterion blocks")
        out.append(S)
    return out


@dataclass(frozen=True)
class ProbeResult:
    passed: bool
    margin: float
    probe: np.ndarray
    block_min_eigs: np.ndarray
    status: str


def probe_matrix(rep: CriterionRepresentation, X, bound: float | None = None) -> ProbeResult:
    """Maximise the common margin ``t`` with all blocks ``>= t I`` at ``X``.

    ``z`` and ``u`` are boxed by ``bound`` and ``t <= 1`` so the problem is
    bounded; the default box is ``1e6 max(1, ||X||)``.  The check passes
    when ``t > 1e-9 max(1, ||X||)``, so information matrices conditioned
    worse than about ``1e9`` count as numerically inadmissible for criteria
    that need ``X`` nonsingular.
    """
    X = np.asarray(X, dtype=float)
    top = max(1.0, float(np.linalg.norm(X, 2)) if X.size else 1.0)
    if bound is None:
        bound = 1e6 * top
    lb = _lmi(rep, X, shift_t=True)
    nv = rep.l + 2
    obj = np.zeros(nv)
    obj[-1] = 1.0
    lb.maximize(obj)
    # box rows: bound - v >= 0, bound + v >= 0 for z and u; 1 - t >= 0
    E = np.eye(nv)
    F = np.hstack([E[:, :-1], -E[:, :-1], E[:, -1:]])
    lb.nonneg(np.concatenate([np.full(2 * (nv - 1), bound), [1.0]]), F)
    sol = sdp.solve(lb.build(), sdp.SolverSettings(tol=1e-9, max_iters=200))
    if sol.status not in (sdp.Status.OPTIMAL, sdp.Status.ITER_LIMIT, sdp.Status.NUM_ERROR):
        raise RuntimeError(f"admissibility probe SDP failed with status {sol.status.value}")
    z, u, t = sol.y[0], sol.y[1 : 1 + rep.l], sol.y[-1]
    eigs = rep.min_eigs(X, z, u)
    return ProbeResult(bool(t > 1e-9 * top), float(t), X, eigs, sol.status.value)


def admissibility_probe(rep: CriterionRepresentation, model, support_bound: int | None = None) -> ProbeResult:
    """Probe admissibility with the uniform design on equispaced points.

    Each proper interval receives ``max(2m, support_bound)`` equispaced points
    and each singleton one point.
    """
    space = model.space
    n = max(2 * model.m, support_bound or 0)
    pts = [np.linspace(a, b, n) for a, b in space.proper] + [np.array(space.singletons, dtype=float)]
    t = np.concatenate(pts)
    M = model.information(t, np.full(t.size, 1.0 / t.size))
    return probe_matrix(rep, M)


# --------------------------------------------------------------------------
# custom representations


def custom_representation(spec: dict, m: int) -> CriterionRepresentation:
    """Build a representation from plain lists.

    ``spec`` holds ``l`` and ``blocks``; each block gives ``A`` as one
    ``k x k`` matrix per symmetric basis element of ``m x m`` matrices (upper
    triangle, row-major; off-diagonal element ``(p, q)`` stands for
    ``E_pq + E_qp``), ``B`` and ``D`` as ``k x k`` matrices and ``C`` as ``l``
    matrices of size ``k x k``.
    """
    l = int(spec.get("l", 0))
    blocks = []
    pairs = [(p, q) for p in range(m) for q in range(p, m)]
    for bi, b in enumerate(spec["blocks"]):
        Bm = np.atleast_2d(np.asarray(b["B"], dtype=float))
        k = Bm.shape[0]
        G = np.asarray(b["A"], dtype=float).reshape(len(pairs), k, k)
        A = np.zeros((m, m, k, k))
        for (p, q), g in zip(pairs, G):
            if p == q:
                A[p, p] = g
            else:
                A[p, q] = A[q, p] = 0.5 * g
        C = np.asarray(b.get("C", np.zeros((l, k, k))), dtype=float).reshape(l, k, k)
        D = np.atleast_2d(np.asarray(b.get("D", np.zeros((k, k))), dtype=float))
        for name, mat in (("B", Bm), ("D", D)):
            if mat.shape != (k, k) or not np.allclose(mat, mat.T):
                raise ValueError(f"block {bi}: {name} must be a symmetric {k}x{k} matrix")
        A = 0.5 * (A + A.transpose(0, 1, 3, 2))
        C = 0.5 * (C + C.transpose(0, 2, 1))
        blocks.append(Block(A, Bm, C, D))
    return CriterionRepresentation(spec.get("name", "custom"), m, l, tuple(blocks))


def verify_representation(rep: CriterionRepresentation, trials: int = 20, seed: int = 0, reference=None) -> list:
    """Spot-check a representation on random positive definite matrices.

    With ``reference`` (a callable on matrices) the max feasible ``z`` must
    match it; without one the checks are finiteness, monotonicity under
    adding a PSD matrix and midpoint concavity.  Returns a list of problems,
    empty when all checks pass.
    """
    rng = np.random.default_rng(seed)
    m = rep.m
    issues = []
    for trial in range(trials):
        G = rng.standard_normal((m, m))
        X = G @ G.T + 0.5 * np.eye(m)
        H = rng.standard_normal((m, m))
        P = H @ H.T
        zx = max_feasible_z(rep, X)
        if not np.isfinite(zx):
            issues.append(f"trial {trial}: max feasible z is {zx}")
            continue
        if reference is not None:
            ref = reference(X)
            if abs(zx - ref) > 1e-6 * max(1.0, abs(ref)):
                issues.append(f"trial {trial}: z={zx} differs from reference {ref}")
        zxp = max_feasible_z(rep, X + P)
        if zxp < zx - 1e-6 * max(1.0, abs(zx)):
            issues.append(f"trial {trial}: not monotone ({zxp} < {zx})")
        zmid = max_feasible_z(rep, X + 0.5 * P)
        if zmid < 0.5 * (zx + zxp) - 1e-6 * max(1.0, abs(zx)):
            issues.append(f"trial {trial}: not concave")
    return issues
