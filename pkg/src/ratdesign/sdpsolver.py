"""Dense primal-dual interior-point solver for block SDPs.

Primal / dual pair handled here::

    minimize   sum_b <C_b, X_b>          maximize   b^T y
    subject to sum_b A_b(X_b) = b        subject to C_b - A_b^*(y) = Z_b in K_b^*

Each block is PSD(n), Nonneg(k) or Free(k); free blocks have zero dual
slack, which turns into equality constraints ``A_f^T y = c_f`` on the dual.
Search directions are HKM with a Mehrotra predictor-corrector; the free
variables are carried through an augmented KKT system.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import kernels

log = logging.getLogger(__name__)

PSD = "psd"
NONNEG = "nonneg"
FREE = "free"


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"
    NUM_ERROR = "NumError"


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in (PSD, NONNEG, FREE):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("block size must be positive")


class SdpProblem:
    """Standard-form conic program with dense per-block constraint data.

    Parameters
    ----------
    blocks : sequence of BlockSpec
    c : list of arrays
        Objective data per block, ``(n, n)`` for PSD blocks, ``(k,)`` otherwise.
    A : list of arrays
        Constraint data per block, ``(m, n, n)`` for PSD blocks, ``(m, k)``
        otherwise.  Only the symmetric part of PSD data is used.
    b : array (m,)
    """

    def __init__(self, blocks: Sequence[BlockSpec], c, A, b, names: Sequence[str] | None = None):
        self.blocks = list(blocks)
        self.b = np.asarray(b, dtype=float).ravel()
        m = self.b.size
        if not (len(c) == len(A) == len(self.blocks)):
            raise ValueError("c, A and blocks must have equal length")
        self.c, self.A = [], []
        for spec, cb, Ab in zip(self.blocks, c, A):
            cb = np.asarray(cb, dtype=float)
            Ab = np.asarray(Ab, dtype=float)
            if spec.kind == PSD:
                n = spec.size
                if cb.shape != (n, n) or Ab.shape != (m, n, n):
                    raise ValueError(f"PSD block of size {n} has data shapes {cb.shape}, {Ab.shape}")
                cb = 0.5 * (cb + cb.T)
                Ab = 0.5 * (Ab + Ab.transpose(0, 2, 1))
            else:
                if cb.shape != (spec.size,) or Ab.shape != (m, spec.size):
                    raise ValueError(f"{spec.kind} block of size {spec.size} has data shapes {cb.shape}, {Ab.shape}")
            self.c.append(cb)
            self.A.append(Ab)
        data = [self.b] + self.c + self.A
        if not all(np.all(np.isfinite(d)) for d in data):
            raise ValueError("problem data must be finite")
        self.names = list(names) if names is not None else [f"b{i}" for i in range(len(self.blocks))]

    @property
    def m(self) -> int:
        return self.b.size

    def apply_A(self, x) -> np.ndarray:
        out = np.zeros(self.m)
        for spec, Ab, xb in zip(self.blocks, self.A, x):
            out += Ab.reshape(self.m, -1) @ np.asarray(xb).ravel()
        return out

    def apply_At(self, y) -> list:
        return [np.tensordot(y, Ab, axes=1) for Ab in self.A]

    def objective(self, x) -> float:
        return float(sum(np.vdot(cb, xb) for cb, xb in zip(self.c, x)))

    def dump(self, path) -> None:
        """Write the problem in a plain sparse text format (see README)."""
        with open(path, "w") as fh:
            fh.write(f"constraints {self.m}\n")
            fh.write("blocks " + " ".join(f"{s.kind}:{s.size}" for s in self.blocks) + "\n")
            fh.write("rhs " + " ".join(repr(float(v)) for v in self.b) + "\n")
            for bi, (spec, cb, Ab) in enumerate(zip(self.blocks, self.c, self.A)):
                for row, data in [(0, cb)] + [(i + 1, Ab[i]) for i in range(self.m)]:
                    if spec.kind == PSD:
                        ii, jj = np.nonzero(np.triu(data))
                        for p, q in zip(ii, jj):
                            fh.write(f"{row} {bi} {p} {q} {float(data[p, q])!r}\n")
                    else:
                        for p in np.flatnonzero(data):
                            fh.write(f"{row} {bi} {p} {p} {float(data[p])!r}\n")


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iters: int = 100
    step_fraction: float = 0.98
    backend: str | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass
class SdpSolution:
    status: Status
    x: list
    y: np.ndarray
    s: list
    pobj: float
    dobj: float
    gap: float
    pinf: float
    dinf: float
    iterations: int
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


def residuals(problem: SdpProblem, sol: SdpSolution) -> dict:
    """Recompute feasibility, gap and cone membership from the returned point."""
    rp = problem.b - problem.apply_A(sol.x)
    At = problem.apply_At(sol.y)
    dres = []
    min_eig = []
    for spec, cb, Atb, sb, xb in zip(problem.blocks, problem.c, At, sol.s, sol.x):
        dres.append(np.ravel(cb - Atb - sb))
        if spec.kind == PSD:
            min_eig.append(
                (float(np.linalg.eigvalsh(xb)[0]), float(np.linalg.eigvalsh(sb)[0]))
            )
        elif spec.kind == NONNEG:
            min_eig.append((float(np.min(xb)), float(np.min(sb))))
        else:
            min_eig.append((None, float(np.max(np.abs(sb))) if np.size(sb) else 0.0))
    pobj = problem.objective(sol.x)
    dobj = float(problem.b @ sol.y)
    cnorm = np.sqrt(sum(np.sum(cb**2) for cb in problem.c))
    return {
        "primal_res": float(np.linalg.norm(rp) / (1 + np.linalg.norm(problem.b))),
        "dual_res": float(np.linalg.norm(np.concatenate(dres)) / (1 + cnorm)),
        "gap": float(abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))),
        "pobj": pobj,
        "dobj": dobj,
        "min_eig": min_eig,
    }


# --------------------------------------------------------------------------
# internals


def _sym(P):
    return 0.5 * (P + P.T)


def _max_step_psd(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class _Factors:
    """Low-rank factorisation of one PSD block's constraint matrices."""

    def __init__(self, Ab):
        m, n, _ = Ab.shape
        cols, signs, starts, owners = [], [], [], []
        count = 0
        for i in range(m):
            Ai = Ab[i]
            amax = np.max(np.abs(Ai))
            if amax == 0.0:
                continue
            nz = np.flatnonzero(np.abs(Ai).sum(axis=0))
            if nz.size == 1:
                p = nz[0]
                w = np.array([Ai[p, p]])
                V = np.zeros((n, 1))
                V[p, 0] = 1.0
            else:
                w, V = np.linalg.eigh(Ai)
                keep = np.abs(w) > 1e-13 * np.max(np.abs(w))
                w, V = w[keep], V[:, keep]
            starts.append(count)
            owners.append(i)
            cols.append(V * np.sqrt(np.abs(w)))
            signs.append(np.sign(w))
            count += w.size
        self.m = m
        self.U = np.hstack(cols) if cols else np.zeros((n, 0))
        self.sign = np.concatenate(signs) if signs else np.zeros(0)
        self.starts = np.asarray(starts, dtype=np.int64)
        self.owners = np.asarray(owners, dtype=np.int64)

    def schur(self, X, Zinv, backend):
        U = self.U
        P = U.T @ X @ U
        Q = U.T @ Zinv @ U
        return kernels.lowrank_schur(P, Q, self.sign, self.starts, self.owners, self.m, backend)


class _Ipm:
    def __init__(self, problem: SdpProblem, settings: SolverSettings):
        self.settings = settings
        self.spec = problem.blocks
        m = problem.m
        self.m = m
        # row equilibration and objective / rhs normalisation
        sq = np.zeros(m)
        for spec, Ab in zip(problem.blocks, problem.A):
            sq += np.sum(Ab.reshape(m, -1) ** 2, axis=1)
        rown = np.sqrt(sq)
        self.zero_rows = rown == 0
        rown[self.zero_rows] = 1.0
        self.D = 1.0 / rown
        A = []
        for spec, Ab in zip(problem.blocks, problem.A):
            A.append(Ab * (self.D[:, None, None] if spec.kind == PSD else self.D[:, None]))
        b = problem.b * self.D
        self.bscale = max(1.0, float(np.linalg.norm(b)))
        self.cscale = max(1.0, float(np.sqrt(sum(np.sum(cb**2) for cb in problem.c))))
        self.b = b / self.bscale
        self.c = [cb / self.cscale for cb in problem.c]
        self.A = A
        self.psd = [i for i, s in enumerate(problem.blocks) if s.kind == PSD]
        self.lp = [i for i, s in enumerate(problem.blocks) if s.kind == NONNEG]
        self.free = [i for i, s in enumerate(problem.blocks) if s.kind == FREE]
        self.factors = {i: _Factors(A[i]) for i in self.psd}
        self.Af = np.hstack([A[i] for i in self.free]) if self.free else np.zeros((m, 0))
        self._setup_free()
        self._setup_projection()
        self.nu = sum(problem.blocks[i].size for i in self.psd) + sum(problem.blocks[i].size for i in self.lp)
        # convergence is judged in the caller's units
        self.bnorm = float(np.linalg.norm(problem.b))
        self.cnorm = float(np.sqrt(sum(np.sum(cb**2) for cb in problem.c)))
        self.objscale = self.bscale * self.cscale
        self._last_step = 1.0

    # linear maps in scaled space
    def Aop(self, x):
        out = np.zeros(self.m)
        for Ab, xb in zip(self.A, x):
            out += Ab.reshape(self.m, -1) @ np.ravel(xb)
        return out

    def At(self, y):
        return [np.tensordot(y, Ab, axes=1) for Ab in self.A]

    def initial_point(self):
        x, z = [], []
        for spec in self.spec:
            if spec.kind == PSD:
                scale = max(10.0, np.sqrt(spec.size))
                x.append(scale * np.eye(spec.size))
                z.append(scale * np.eye(spec.size))
            elif spec.kind == NONNEG:
                x.append(10.0 * np.ones(spec.size))
                z.append(10.0 * np.ones(spec.size))
            else:
                x.append(np.zeros(spec.size))
                z.append(np.zeros(spec.size))
        return x, np.zeros(self.m), z

    def run(self):
        st = self.settings
        backend = st.backend or kernels.BACKEND
        x, y, z = self.initial_point()
        history = []
        status = Status.ITER_LIMIT
        best = None
        it = 0
        for it in range(st.max_iters + 1):
            Aty = self.At(y)
            rp = self.b - self.Aop(x)
            rd = [cb - atb - zb for cb, atb, zb in zip(self.c, Aty, z)]
            pobj = float(sum(np.vdot(cb, xb) for cb, xb in zip(self.c, x))) * self.objscale
            dobj = float(self.b @ y) * self.objscale
            xz = float(sum(np.vdot(x[i], z[i]) for i in self.psd + self.lp))
            mu = xz / max(self.nu, 1)
            gap = max(abs(pobj - dobj), xz * self.objscale) / (1.0 + abs(pobj) + abs(dobj))
            pinf = float(np.linalg.norm(rp / self.D)) * self.bscale / (1.0 + self.bnorm)
            dinf = float(np.sqrt(sum(np.sum(r**2) for r in rd))) * self.cscale / (1.0 + self.cnorm)
            # pobj - dobj = <X, Z> + cross holds for any iterate, feasible or not
            cross = (float(sum(np.vdot(rb, xb) for rb, xb in zip(rd, x))) - float(rp @ y)) * self.objscale
            history.append(
                {"iter": it, "pobj": pobj, "dobj": dobj, "gap": gap, "pinf": pinf, "dinf": dinf, "xz": xz, "cross": cross}
            )
            merit = max(gap, pinf, dinf)
            if best is None or merit < best[0]:
                best = (merit, [v.copy() for v in x], y.copy(), [v.copy() for v in z], it)
            if merit <= st.tol:
                status = Status.OPTIMAL
                break
            xnorm = max(np.max(np.abs(v)) if np.size(v) else 0.0 for v in x)
            ynorm = float(np.max(np.abs(y))) if y.size else 0.0
            if ynorm > 1e12 and dobj > 0 and dinf < 1e-6:
                status = Status.INFEASIBLE
                break
            if xnorm > 1e12 and pobj < 0 and pinf < 1e-6:
                status = Status.UNBOUNDED
                break
            if it == st.max_iters:
                break
            try:
                step = self._step(x, y, z, rp, rd, mu, backend)
            except np.linalg.LinAlgError as exc:
                log.debug("factorisation failed at iteration %d: %s", it, exc)
                status = Status.NUM_ERROR
                break
            if step is None:
                status = Status.NUM_ERROR
                break
            x, y, z, ap, ad = step
            history[-1]["ap"], history[-1]["ad"] = ap, ad
            if max(ap, ad) < 1e-10:
                status = Status.NUM_ERROR
                break
        if status != Status.OPTIMAL and best is not None:
            _, x, y, z, _ = best
        return status, x, y, z, it, history

    def _schur(self, x, zinv, backend):
        M = np.zeros((self.m, self.m))
        for i in self.psd:
            M += self.factors[i].schur(x[i], zinv[i], backend)
        for i in self.lp:
            Ab = self.A[i]
            M += (Ab * (x[i] / self._z[i])) @ Ab.T
        return M

    def _setup_free(self):
        """Pivoted QR of the free-variable columns for the null-space KKT solve."""
        Af = self.Af
        nf = Af.shape[1]
        if nf == 0:
            self.kkt = None
            return
        Q, R, piv = sla.qr(Af, mode="full", pivoting=True)
        diag = np.abs(np.diag(R))
        r = int(np.sum(diag > 1e-12 * max(diag[0], 1e-300))) if diag.size else 0
        self.kkt = {"Q1": Q[:, :r], "Q2": Q[:, r:], "R": R[:r, :r], "piv": piv, "r": r}

    def _setup_projection(self):
        """Orthogonal factor of ``A^T`` for the minimum-norm primal correction."""
        At = np.hstack([Ab.reshape(self.m, -1) for Ab in self.A]).T
        Q, R, piv = sla.qr(At, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        r = int(np.sum(diag > 1e-12 * max(diag[0], 1e-300))) if diag.size else 0
        self.proj = (Q[:, :r], R[:r, :r], piv[:r])

    def _project(self, dx, e):
        """Add the minimum-norm ``delta`` with ``A delta = e`` to ``dx``."""
        Q, R, piv = self.proj
        if Q.shape[1] == 0:
            return dx
        w = sla.solve_triangular(R, e[piv], trans="T", check_finite=False)
        delta = Q @ w
        out, off = [], 0
        for v in dx:
            k = np.size(v)
            out.append(v + delta[off : off + k].reshape(np.shape(v)))
            off += k
        return out

    def _factor(self, M):
        """Factor the KKT system ``[[M, A_f], [A_f^T, 0]]``.

        Free columns are handled by the null-space method: with
        ``A_f P = [Q1 Q2] [R; 0]`` the system reduces to a Cholesky solve with
        ``Q2^T M Q2``, which stays positive definite when ``M`` is only
        semidefinite along directions fixed by the free variables.
        """
        kkt = self.kkt
        Mr = M if kkt is None else kkt["Q2"].T @ M @ kkt["Q2"]
        if Mr.shape[0] == 0:
            return ("empty", None, M)
        reg = 0.0
        for attempt in range(2):
            try:
                A = Mr + reg * np.eye(Mr.shape[0]) if reg else Mr
                return ("chol", sla.cho_factor(A, lower=True, check_finite=False), M)
            except (np.linalg.LinAlgError, ValueError):
                reg = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(Mr)))))
        raise np.linalg.LinAlgError("Schur complement factorisation failed after regularisation")

    def _solve(self, fac, h, rf):
        kkt = self.kkt
        if kkt is None:
            return sla.cho_solve(fac[1], h, check_finite=False), np.zeros(0)
        M = fac[2]
        Q1, Q2, R, piv, r = kkt["Q1"], kkt["Q2"], kkt["R"], kkt["piv"], kkt["r"]
        dy1 = sla.solve_triangular(R, rf[piv[:r]], trans="T", check_finite=False)
        dy = Q1 @ dy1
        if fac[0] == "chol":
            dy2 = sla.cho_solve(fac[1], Q2.T @ (h - M @ dy), check_finite=False)
            dy = dy + Q2 @ dy2
        return dy, None

    def _free_step(self, rp, dx):
        """Free-variable step from the primal equations ``A_f dx_f = rp - A_c dx_c``.

        Solving here rather than from the first KKT row avoids multiplying by
        the (ill-conditioned) Schur matrix.
        """
        kkt = self.kkt
        res = rp.copy()
        for i in self.psd + self.lp:
            res -= self.A[i].reshape(self.m, -1) @ np.ravel(dx[i])
        w = sla.solve_triangular(kkt["R"], kkt["Q1"].T @ res, check_finite=False)
        dxf = np.zeros(self.Af.shape[1])
        dxf[kkt["piv"][: kkt["r"]]] = w
        return dxf

    def _direction(self, x, z, zinv, rp, rd, fac, Rc):
        """Solve for (dx, dy, dz) given complementarity targets ``Rc``."""
        self._rp = rp
        # h = rp - A(Rc - E(rd))
        tmp = [None] * len(self.spec)
        for i in self.psd:
            tmp[i] = Rc[i] - _sym(x[i] @ rd[i] @ zinv[i])
        for i in self.lp:
            tmp[i] = Rc[i] - x[i] / z[i] * rd[i]
        h = rp.copy()
        for i in self.psd + self.lp:
            h -= self.A[i].reshape(self.m, -1) @ np.ravel(tmp[i])
        rf = np.concatenate([rd[i] for i in self.free]) if self.free else np.zeros(0)
        dy, _ = self._solve(fac, h, rf)
        dx, dz = self._recover(x, z, zinv, rd, Rc, dy)
        # iterative refinement against the primal equations themselves
        for _ in range(2):
            e = rp - self.Aop(dx)
            if np.linalg.norm(e) <= 1e-14 * (1.0 + np.linalg.norm(rp)):
                break
            if self.free:
                delta, _ = self._solve(fac, e, np.zeros(self.Af.shape[1]))
                delta = delta - self.kkt["Q1"] @ (self.kkt["Q1"].T @ delta)
            else:
                delta = sla.cho_solve(fac[1], e, check_finite=False)
            dy = dy + delta
            dx, dz = self._recover(x, z, zinv, rd, Rc, dy)
        # when the remaining error would dominate the primal residual, remove
        # it by a minimum-norm correction; small errors are left alone because
        # the correction ignores the cone and can shorten the step badly
        e = rp - self.Aop(dx)
        target = 0.1 * self.settings.tol * (1.0 + self.bnorm) / self.bscale
        if np.linalg.norm(e / self.D) > max(0.5 * np.linalg.norm(rp / self.D), target):
            dx = self._project(dx, e)
        return dx, dy, dz

    def _recover(self, x, z, zinv, rd, Rc, dy):
        Atdy = self.At(dy)
        dx, dz = [None] * len(self.spec), [None] * len(self.spec)
        for i in self.psd:
            dz[i] = rd[i] - Atdy[i]
            dx[i] = Rc[i] - _sym(x[i] @ dz[i] @ zinv[i])
        for i in self.lp:
            dz[i] = rd[i] - Atdy[i]
            dx[i] = Rc[i] - x[i] / z[i] * dz[i]
        if self.free:
            dxf = self._free_step(self._rp, dx)
            off = 0
            for i in self.free:
                k = self.spec[i].size
                dx[i] = dxf[off : off + k]
                dz[i] = np.zeros(k)
                off += k
        return dx, dz

    def _steplengths(self, x, z, dx, dz):
        ap, ad = np.inf, np.inf
        for i in self.psd:
            ap = min(ap, _max_step_psd(x[i], dx[i]))
            ad = min(ad, _max_step_psd(z[i], dz[i]))
        for i in self.lp:
            ap = min(ap, _max_step_lp(x[i], dx[i]))
            ad = min(ad, _max_step_lp(z[i], dz[i]))
        return ap, ad

    def _step(self, x, y, z, rp, rd, mu, backend):
        # back off from the boundary after short steps so the iterates recentre;
        # the configured fraction is the cap reached after full steps
        gamma = min(self.settings.step_fraction, 0.9 + 0.09 * self._last_step)
        zinv = {}
        for i in self.psd:
            L = np.linalg.cholesky(z[i])
            Li = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
            zinv[i] = Li.T @ Li
        self._z = z
        M = self._schur(x, zinv, backend)
        fac = self._factor(M)
        # predictor
        Rc = [None] * len(self.spec)
        for i in self.psd + self.lp:
            Rc[i] = -x[i]
        dxa, dya, dza = self._direction(x, z, zinv, rp, rd, fac, Rc)
        ap, ad = self._steplengths(x, z, dxa, dza)
        ap, ad = min(1.0, ap), min(1.0, ad)
        xz_aff = sum(np.vdot(x[i] + ap * dxa[i], z[i] + ad * dza[i]) for i in self.psd + self.lp)
        mu_aff = xz_aff / max(self.nu, 1)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        # corrector
        for i in self.psd:
            Rc[i] = sigma * mu * zinv[i] - x[i] - _sym(dxa[i] @ dza[i] @ zinv[i])
        for i in self.lp:
            Rc[i] = (sigma * mu - x[i] * z[i] - dxa[i] * dza[i]) / z[i]
        dx, dy, dz = self._direction(x, z, zinv, rp, rd, fac, Rc)
        ap, ad = self._steplengths(x, z, dx, dz)
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if not (np.isfinite(ap) and np.isfinite(ad)):
            return None
        xn = [xb + ap * dxb for xb, dxb in zip(x, dx)]
        zn = [zb + ad * dzb for zb, dzb in zip(z, dz)]
        yn = y + ad * dy
        for i in self.psd:
            xn[i] = _sym(xn[i])
            zn[i] = _sym(zn[i])
        if not all(np.all(np.isfinite(v)) for v in xn + zn) or not np.all(np.isfinite(yn)):
            return None
        self._last_step = min(ap, ad)
        return xn, yn, zn, ap, ad


def solve(problem: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve ``problem``; deterministic for fixed inputs and settings."""
    settings = settings or SolverSettings()
    ipm = _Ipm(problem, settings)
    if np.any(ipm.zero_rows & (problem.b != 0)):
        z = [np.zeros_like(cb) for cb in problem.c]
        return SdpSolution(Status.INFEASIBLE, z, np.zeros(problem.m), z, np.nan, np.nan, np.inf, np.inf, np.inf, 0)
    status, xs, ys, zs, iters, history = ipm.run()
    x = [xb * ipm.bscale for xb in xs]
    y = ys * ipm.D * ipm.cscale
    s = [zb * ipm.cscale for zb in zs]
    for i in ipm.free:
        s[i] = problem.c[i] - problem.apply_At(y)[i]
    res = residuals(problem, SdpSolution(status, x, y, s, 0, 0, 0, 0, 0, iters))
    scale = {"bscale": ipm.bscale, "cscale": ipm.cscale}
    for h in history:
        h.update(scale)
    return SdpSolution(
        status, x, y, s, res["pobj"], res["dobj"], res["gap"], res["primal_res"], res["dual_res"], iters, history
    )


# --------------------------------------------------------------------------
# helpers for building problems


class LmiBuilder:
    """Dual-form builder: maximise ``b^T y`` subject to LMIs and equalities in ``y``.

    Every block added is a slack ``C - sum_i y_i F_i`` constrained to a cone;
    the returned :class:`SdpProblem` has ``y`` as its dual vector.
    """

    def __init__(self, nvars: int):
        self.n = nvars
        self.blocks: list[BlockSpec] = []
        self.c: list = []
        self.A: list = []
        self.obj = np.zeros(nvars)

    def maximize(self, b):
        self.obj = np.asarray(b, dtype=float).copy()

    def psd(self, C, F):
        """``C - sum_i y_i F[i] >= 0`` (PSD); ``F`` has shape ``(nvars, n, n)``."""
        C = np.atleast_2d(np.asarray(C, dtype=float))
        self.blocks.append(BlockSpec(PSD, C.shape[0]))
        self.c.append(C)
        self.A.append(np.asarray(F, dtype=float))
        return len(self.blocks) - 1

    def nonneg(self, c, F):
        """``c - F^T y >= 0`` componentwise; ``F`` has shape ``(nvars, k)``."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        self.blocks.append(BlockSpec(NONNEG, c.size))
        self.c.append(c)
        self.A.append(np.asarray(F, dtype=float).reshape(self.n, c.size))
        return len(self.blocks) - 1

    def equal(self, c, F):
        """``F^T y = c``; ``F`` has shape ``(nvars, k)``."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        self.blocks.append(BlockSpec(FREE, c.size))
        self.c.append(c)
        self.A.append(np.asarray(F, dtype=float).reshape(self.n, c.size))
        return len(self.blocks) - 1

    def build(self) -> SdpProblem:
        return SdpProblem(self.blocks, self.c, self.A, self.obj)
