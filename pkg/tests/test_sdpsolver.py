import numpy as np
import pytest

from ratdesign import sdpsolver as sdp
from ratdesign.assembler import DesignProblem, assemble, optimal_value
from ratdesign.modelfile import load_model


def one_by_one():
    """minimise y subject to y - 1 >= 0, written as maximise -y."""
    lb = sdp.LmiBuilder(1)
    lb.maximize([-1.0])
    lb.psd([[-1.0]], [[[-1.0]]])
    return lb.build()


def planted(rng, sizes, nlp, m):
    """Random SDP with a known strictly complementary optimal pair.

    Per PSD block ``X* = Q diag(l, 0) Q^T`` and ``Z* = Q diag(0, s) Q^T`` so
    ``X* Z* = 0`` and ``X* + Z*`` is positive definite; ``b = A(X*)`` and
    ``C = A^*(y*) + Z*`` make both feasible, hence optimal with value ``b^T y*``.
    """
    blocks, X, Z, A = [], [], [], []
    for n in sizes:
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        r = int(rng.integers(1, n))
        X.append(Q @ np.diag(np.concatenate([rng.uniform(0.5, 2, r), np.zeros(n - r)])) @ Q.T)
        Z.append(Q @ np.diag(np.concatenate([np.zeros(r), rng.uniform(0.5, 2, n - r)])) @ Q.T)
        G = rng.standard_normal((m, n, n))
        A.append(G + G.transpose(0, 2, 1))
        blocks.append(sdp.BlockSpec(sdp.PSD, n))
    if nlp:
        on = rng.random(nlp) < 0.5
        X.append(np.where(on, rng.uniform(0.5, 2, nlp), 0.0))
        Z.append(np.where(on, 0.0, rng.uniform(0.5, 2, nlp)))
        A.append(rng.standard_normal((m, nlp)))
        blocks.append(sdp.BlockSpec(sdp.NONNEG, nlp))
    y = rng.standard_normal(m)
    b = sum(Ab.reshape(m, -1) @ np.ravel(xb) for Ab, xb in zip(A, X))
    C = [np.tensordot(y, Ab, axes=1) + zb for Ab, zb in zip(A, Z)]
    return sdp.SdpProblem(blocks, C, A, b), float(b @ y)


def planted_instances(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        sizes = [int(rng.integers(2, 13)) for _ in range(int(rng.integers(1, 4)))]
        dim = sum(n * (n + 1) // 2 for n in sizes)
        m = int(rng.integers(1, min(60, dim) + 1))
        yield planted(rng, sizes, int(rng.integers(0, 5)), m)


# --------------------------------------------------------------------------
# hand examples


def test_one_by_one():
    sol = sdp.solve(one_by_one())
    assert sol.status == sdp.Status.OPTIMAL
    assert sol.y[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.x[0][0, 0] == pytest.approx(1.0, abs=1e-7)


def test_trace_with_fixed_diagonal():
    A = np.zeros((2, 2, 2))
    A[0, 0, 0] = A[1, 1, 1] = 1.0
    sol = sdp.solve(sdp.SdpProblem([sdp.BlockSpec(sdp.PSD, 2)], [np.eye(2)], [A], [1.0, 2.0]))
    assert sol.status == sdp.Status.OPTIMAL
    assert sol.pobj == pytest.approx(3.0, rel=1e-8)
    np.testing.assert_allclose(sol.x[0], np.diag([1.0, 2.0]), atol=1e-6)


def test_redundant_constraint():
    # a repeated row makes the Schur complement singular
    A = np.zeros((3, 2, 2))
    A[0, 0, 0] = A[1, 1, 1] = A[2, 0, 0] = 1.0
    sol = sdp.solve(sdp.SdpProblem([sdp.BlockSpec(sdp.PSD, 2)], [np.eye(2)], [A], [1.0, 2.0, 1.0]))
    assert sol.status == sdp.Status.OPTIMAL
    assert sol.pobj == pytest.approx(3.0, rel=1e-7)


def test_free_and_nonneg_blocks():
    # maximise y1 + y2 with y1 = 2 - y2 (equality), y2 <= 1, y1 <= 1.5 (PSD 1x1)
    lb = sdp.LmiBuilder(2)
    lb.maximize([1.0, 2.0])
    lb.equal([2.0], [[1.0], [1.0]])
    lb.nonneg([1.0], [[0.0], [1.0]])
    lb.psd([[1.5]], [[[1.0]], [[0.0]]])
    sol = sdp.solve(lb.build())
    assert sol.status == sdp.Status.OPTIMAL
    np.testing.assert_allclose(sol.y, [1.0, 1.0], atol=1e-7)


def test_zeropoly_design_sdp_value():
    spec = load_model("zeropoly_e")
    asdp = assemble(DesignProblem(spec.model, spec.criterion, spec.K))
    sol = sdp.solve(asdp.problem)
    assert sol.status == sdp.Status.OPTIMAL
    assert optimal_value(asdp, sol) == pytest.approx(1.0, abs=1e-7)


def test_infeasible_constant_row():
    A = np.zeros((1, 1, 1))
    sol = sdp.solve(sdp.SdpProblem([sdp.BlockSpec(sdp.PSD, 1)], [np.eye(1)], [A], [1.0]))
    assert sol.status == sdp.Status.INFEASIBLE


def test_settings_and_data_validation():
    with pytest.raises(ValueError):
        sdp.SolverSettings(tol=0.0)
    with pytest.raises(ValueError):
        sdp.SolverSettings(max_iters=0)
    with pytest.raises(ValueError):
        sdp.SolverSettings(step_fraction=1.0)
    with pytest.raises(ValueError):
        sdp.SdpProblem([sdp.BlockSpec(sdp.PSD, 1)], [[[np.nan]]], [np.zeros((1, 1, 1))], [0.0])
    with pytest.raises(ValueError):
        sdp.BlockSpec("cone", 2)


def test_asymmetric_data_uses_symmetric_part():
    A = np.zeros((1, 2, 2))
    A[0, 0, 1] = 2.0  # symmetric part has 1 in both off-diagonal slots
    A[0, 0, 0] = 1.0
    P = sdp.SdpProblem([sdp.BlockSpec(sdp.PSD, 2)], [np.eye(2)], [A], [1.0])
    np.testing.assert_allclose(P.A[0][0], [[1.0, 1.0], [1.0, 0.0]])


# --------------------------------------------------------------------------
# residuals


def test_residuals_of_exact_pair():
    P = one_by_one()
    pair = sdp.SdpSolution(sdp.Status.OPTIMAL, [np.array([[1.0]])], np.array([1.0]), [np.array([[0.0]])], 0, 0, 0, 0, 0, 0)
    res = sdp.residuals(P, pair)
    assert res["primal_res"] <= 1e-12 and res["dual_res"] <= 1e-12 and res["gap"] <= 1e-12


def test_residuals_detect_perturbation():
    P = one_by_one()
    pair = sdp.SdpSolution(sdp.Status.OPTIMAL, [np.array([[1.001]])], np.array([1.0]), [np.array([[0.0]])], 0, 0, 0, 0, 0, 0)
    assert sdp.residuals(P, pair)["primal_res"] > 1e-4
    pair.x, pair.y = [np.array([[1.0]])], np.array([1.001])
    assert sdp.residuals(P, pair)["dual_res"] > 1e-4


def test_reported_residuals_are_recomputed():
    P, _ = next(planted_instances(1, 11))
    sol = sdp.solve(P)
    res = sdp.residuals(P, sol)
    assert sol.gap == res["gap"] and sol.pinf == res["primal_res"] and sol.dinf == res["dual_res"]


# --------------------------------------------------------------------------
# properties


def test_planted_optimum_recovered():
    worst = 0
    for P, value in planted_instances(60, 2024):
        sol = sdp.solve(P)
        assert sol.iterations <= 50
        rel = abs(sol.pobj - value) / max(1.0, abs(value))
        assert rel <= 1e-6
        worst = max(worst, sol.iterations)
        if sol.status == sdp.Status.OPTIMAL:
            res = sdp.residuals(P, sol)
            assert res["gap"] <= 1e-8 and res["primal_res"] <= 1e-8 and res["dual_res"] <= 1e-8
            for spec, (ex, ez), xb in zip(P.blocks, res["min_eig"], sol.x):
                if spec.kind == sdp.PSD:
                    assert ex >= -1e-8 * (1 + np.linalg.norm(xb))


def test_weak_duality_on_every_iterate():
    for P, _ in planted_instances(15, 5):
        sol = sdp.solve(P)
        for h in sol.history:
            scale = 1.0 + abs(h["pobj"]) + abs(h["dobj"])
            # residual-corrected gap equals <X, Z>, nonnegative for cone iterates
            assert h["pobj"] - h["dobj"] - h["cross"] >= -1e-10 * scale
        final = sol.history[-1]
        assert final["pobj"] - final["dobj"] >= -1e-8 * (1 + abs(final["pobj"]) + abs(final["dobj"]))


def test_deterministic():
    P, _ = next(planted_instances(1, 99))
    a, b = sdp.solve(P), sdp.solve(P)
    assert a.iterations == b.iterations
    assert a.pobj == b.pobj and a.dobj == b.dobj
    np.testing.assert_array_equal(a.y, b.y)
    for xa, xb in zip(a.x, b.x):
        np.testing.assert_array_equal(xa, xb)


def test_iteration_limit_reported():
    P, _ = next(planted_instances(1, 3))
    sol = sdp.solve(P, sdp.SolverSettings(max_iters=2))
    assert sol.status == sdp.Status.ITER_LIMIT
    assert sol.iterations == 2


# --------------------------------------------------------------------------
# dump


def test_dump_round_trip(tmp_path):
    A = np.zeros((2, 2, 2))
    A[0, 0, 0] = A[1, 1, 1] = 1.0
    A[1, 0, 1] = A[1, 1, 0] = 0.25
    P = sdp.SdpProblem([sdp.BlockSpec(sdp.PSD, 2), sdp.BlockSpec(sdp.NONNEG, 1)], [np.eye(2), [3.0]], [A, [[1.0], [0.0]]], [1.0, 2.0])
    path = tmp_path / "p.txt"
    P.dump(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "constraints 2"
    assert lines[1] == "blocks psd:2 nonneg:1"
    assert lines[2] == "rhs 1.0 2.0"
    # rebuild the data from the triplets
    C = [np.zeros((2, 2)), np.zeros(1)]
    AA = [np.zeros((2, 2, 2)), np.zeros((2, 1))]
    for line in lines[3:]:
        row, blk, p, q, v = line.split()
        row, blk, p, q, v = int(row), int(blk), int(p), int(q), float(v)
        if blk == 0:
            target = C[0] if row == 0 else AA[0][row - 1]
            target[p, q] = target[q, p] = v
        else:
            (C[1] if row == 0 else AA[1][row - 1])[p] = v
    np.testing.assert_array_equal(C[0], P.c[0])
    np.testing.assert_array_equal(C[1], P.c[1])
    np.testing.assert_array_equal(AA[0], P.A[0])
    np.testing.assert_array_equal(AA[1], P.A[1])
