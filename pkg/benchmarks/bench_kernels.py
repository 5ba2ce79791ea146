"""Time the numba and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``.  Reports the Schur
accumulation kernel on random factor data, Legendre evaluation, and a full
solve of the degree-20 Legendre design problem under each backend.
"""

import argparse
import time

import numpy as np

from ratdesign import kernels
from ratdesign import sdpsolver as sdp
from ratdesign.assembler import DesignProblem, assemble
from ratdesign.modelfile import load_model


def best_of(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def schur_case(n, m, seed=0):
    rng = np.random.default_rng(seed)
    cols, signs, starts, count = [], [], [], 0
    for _ in range(m):
        G = rng.standard_normal((n, n))
        w, V = np.linalg.eigh(G + G.T)
        starts.append(count)
        cols.append(V * np.sqrt(np.abs(w)))
        signs.append(np.sign(w))
        count += n
    U = np.hstack(cols)
    G = rng.standard_normal((n, n))
    X = G @ G.T + np.eye(n)
    P, Q = U.T @ X @ U, U.T @ np.linalg.inv(X) @ U
    return P, Q, np.concatenate(signs), np.array(starts, dtype=np.int64), np.arange(m), m


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if kernels._HAVE_NUMBA else [])
    print(f"default backend: {kernels.BACKEND}")

    for n, m in [(11, 21), (21, 41), (21, 120)]:
        case = schur_case(n, m)
        row = [f"{b} {best_of(lambda: kernels.lowrank_schur(*case, backend=b), args.repeat) * 1e3:8.3f} ms" for b in backends]
        print(f"lowrank_schur  n={n:3d} m={m:4d}  " + "  ".join(row))

    s = np.linspace(-1, 1, 20001)
    c = np.random.default_rng(1).standard_normal(41)
    row = [f"{b} {best_of(lambda: kernels.legval(s, c, b), args.repeat) * 1e3:8.3f} ms" for b in backends]
    print("legval         deg=40 pts=20001  " + "  ".join(row))

    spec = load_model("legendre20_e")
    problem = assemble(DesignProblem(spec.model, spec.criterion)).problem
    for b in backends:
        t = best_of(lambda: sdp.solve(problem, sdp.SolverSettings(backend=b)), max(1, args.repeat // 2))
        print(f"solve legendre20_e  {b:5s} {t:8.3f} s")


if __name__ == "__main__":
    main()
