"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import from ``RATDESIGN_KERNELS``:
``numba`` (default when numba imports) or ``numpy``.  Both paths compute
the same quantities; only summation order may differ.
"""

from __future__ import annotations

import os

import numpy as np

_REQUESTED = os.environ.get("RATDESIGN_KERNELS", "numba").strip().lower()

try:  # pragma: no cover - import guard
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

BACKEND = "numba" if (_REQUESTED != "numpy" and _HAVE_NUMBA) else "numpy"


# --------------------------------------------------------------------------
# Schur complement from low-rank constraint factors
#
# Constraint i restricted to one PSD block is  sum_{r in i} sign_r u_r u_r^T.
# With P = U^T X U and Q = U^T Z^{-1} U the HKM Schur entry is
#   M_ij = sum_{r in i, q in j} sign_r sign_q P_rq Q_rq.


def _lowrank_schur_numpy(P, Q, sign, starts, owners, m):
    H = (sign[:, None] * sign[None, :]) * P * Q
    rows = np.add.reduceat(H, starts, axis=0)
    sub = np.add.reduceat(rows, starts, axis=1)
    M = np.zeros((m, m))
    M[np.ix_(owners, owners)] = sub
    return M


if _HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _lowrank_schur_numba(P, Q, sign, starts, owners, m):  # pragma: no cover - jitted
        ng = starts.size
        R = P.shape[0]
        M = np.zeros((m, m))
        for gi in range(ng):
            r0 = starts[gi]
            r1 = starts[gi + 1] if gi + 1 < ng else R
            for gj in range(gi, ng):
                q0 = starts[gj]
                q1 = starts[gj + 1] if gj + 1 < ng else R
                acc = 0.0
                for r in range(r0, r1):
                    sr = sign[r]
                    for q in range(q0, q1):
                        acc += sr * sign[q] * P[r, q] * Q[r, q]
                M[owners[gi], owners[gj]] = acc
                M[owners[gj], owners[gi]] = acc
        return M

    @numba.njit(cache=True)
    def _legval_numba(s, c):  # pragma: no cover - jitted
        out = np.empty(s.size)
        n = c.size
        for k in range(s.size):
            x = s[k]
            if n == 1:
                out[k] = c[0]
                continue
            p0 = 1.0
            p1 = x
            acc = c[0] + c[1] * x
            for j in range(1, n - 1):
                p2 = ((2 * j + 1) * x * p1 - j * p0) / (j + 1)
                acc += c[j + 1] * p2
                p0 = p1
                p1 = p2
            out[k] = acc
        return out


def lowrank_schur(P, Q, sign, starts, owners, m, backend: str | None = None):
    """Accumulate the Schur block from factor Gram matrices ``P`` and ``Q``.

    ``starts`` marks where each constraint's factors begin (factors sorted by
    constraint), ``owners`` gives that constraint's row index in the ``m x m``
    result.
    """
    backend = backend or BACKEND
    if starts.size == 0:
        return np.zeros((m, m))
    if backend == "numba" and _HAVE_NUMBA:
        return _lowrank_schur_numba(
            np.ascontiguousarray(P), np.ascontiguousarray(Q), sign, starts.astype(np.int64), owners.astype(np.int64), m
        )
    return _lowrank_schur_numpy(P, Q, sign, starts, owners, m)


def dense_schur(As, X, Zinv):
    """Reference HKM Schur block ``M_ij = tr(A_i X A_j Z^{-1})`` from dense constraint matrices."""
    G = np.matmul(np.matmul(X, As), Zinv)
    k = As.shape[0]
    M = G.reshape(k, -1) @ As.reshape(k, -1).T
    return 0.5 * (M + M.T)


def legval(s, c, backend: str | None = None):
    """Legendre series ``sum_k c_k P_k(s)`` on a 1-d array ``s``."""
    backend = backend or BACKEND
    s = np.ascontiguousarray(np.asarray(s, dtype=float).ravel())
    c = np.ascontiguousarray(np.asarray(c, dtype=float).ravel())
    if backend == "numba" and _HAVE_NUMBA:
        return _legval_numba(s, c)
    return np.polynomial.legendre.legval(s, c)
