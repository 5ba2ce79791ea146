import numpy as np
import pytest

from ratdesign.criteria import (
    DIRECT,
    admissibility_probe,
    custom_representation,
    max_feasible_z,
    phi_A,
    phi_D,
    phi_E,
    represent,
    represent_A,
    represent_D,
    represent_E,
    verify_representation,
)
from ratdesign.exprmodel import RegressionModel
from ratdesign.polycore import DesignSpace, Polynomial, RationalFunction

from conftest import monomials, radiation_model


def random_pd(rng, m):
    G = rng.standard_normal((m, m))
    return G @ G.T + 0.1 * np.eye(m)


# --------------------------------------------------------------------------
# direct oracles on hand examples


def test_direct_values():
    assert phi_E(np.eye(2)) == 1.0
    assert phi_A(np.array([[4.0]])) == pytest.approx(-0.25)
    assert phi_A(np.diag([1.0, 2.0])) == pytest.approx(-1.5)
    assert phi_D(np.diag([4.0, 1.0])) == pytest.approx(2.0)
    assert phi_A(np.diag([1.0, 0.0])) == -np.inf
    assert phi_D(np.diag([1.0, 0.0])) == 0.0


# --------------------------------------------------------------------------
# representations


def test_E_blocks_at_identity():
    rep = represent_E(2)
    assert rep.p == 1 and rep.l == 0 and rep.blocks[0].size == 2
    assert rep.holds(np.eye(2), 1.0, np.zeros(0))
    assert not rep.holds(np.eye(2), 1.1, np.zeros(0))


def test_A_dimension_audit():
    for m in range(1, 9):
        rep = represent_A(m)
        assert rep.p == m + 1 and rep.l == m
        assert all(b.size == m + 1 for b in rep.blocks[:m])
        assert rep.blocks[m].size == 1


def test_D_scalar_case():
    rep = represent_D(1)
    assert rep.p == 1 and rep.l == 0
    assert max_feasible_z(rep, np.array([[3.0]])) == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize(
    "name, X, value",
    [("A", [[4.0]], -0.25), ("A", np.diag([1.0, 2.0]), -1.5), ("D", np.diag([4.0, 1.0]), 2.0), ("E", np.diag([3.0, 0.5]), 0.5)],
)
def test_max_feasible_z_examples(name, X, value):
    X = np.asarray(X, dtype=float)
    assert max_feasible_z(represent(name, X.shape[0]), X) == pytest.approx(value, rel=1e-7)


@pytest.mark.parametrize("name", ["E", "A", "D"])
@pytest.mark.parametrize("m", [1, 2, 3, 5, 8])
def test_representation_matches_direct_oracle(name, m):
    rng = np.random.default_rng(1000 * m + ord(name))
    rep = represent(name, m)
    for _ in range(10):
        X = random_pd(rng, m)
        ref = DIRECT[name](X)
        assert max_feasible_z(rep, X) == pytest.approx(ref, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("name", ["E", "A", "D"])
def test_fifty_random_matrices(name):
    rng = np.random.default_rng(ord(name))
    for _ in range(50):
        m = int(rng.integers(1, 7))
        X = random_pd(rng, m)
        ref = DIRECT[name](X)
        assert abs(max_feasible_z(represent(name, m), X) - ref) <= 1e-6 * max(1.0, abs(ref))


@pytest.mark.parametrize("name", ["E", "A", "D"])
def test_monotone_in_loewner_order(name):
    rng = np.random.default_rng(5 + ord(name))
    rep = represent(name, 4)
    for _ in range(10):
        Y = random_pd(rng, 4)
        H = rng.standard_normal((4, 2))
        X = Y + H @ H.T
        assert max_feasible_z(rep, X) >= max_feasible_z(rep, Y) - 1e-8


def test_blocks_hold_at_direct_value_for_D():
    # an explicit feasible point: with X = C C^T take L = C diag(C), so that
    # L diag(L)^-1 L^T = X and the leaves multiply to det(X); tower at geometric means
    X = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]])
    rep = represent_D(3)
    z = phi_D(X)
    C = np.linalg.cholesky(X)
    L = C * np.diag(C)[None, :]
    tri = [L[i, j] for i in range(3) for j in range(i + 1)]
    diag = np.diag(L)
    leaves = list(diag) + [z]
    n1 = np.sqrt(leaves[0] * leaves[1])
    n2 = np.sqrt(leaves[2] * leaves[3])
    root = np.sqrt(n1 * n2)
    u = np.array(tri + [root, n1, n2])
    assert root == pytest.approx(z, rel=1e-12)
    assert rep.holds(X, z, u, tol=1e-9)
    assert not rep.holds(X, 1.01 * z, u, tol=0.0)


def test_unknown_criterion():
    with pytest.raises(ValueError):
        represent("G", 2)
    with pytest.raises(ValueError):
        represent_E(0)


# --------------------------------------------------------------------------
# admissibility


def test_E_is_admissible_for_any_model():
    model = RegressionModel(monomials([0, 1, 2]), RationalFunction.constant(1.0), DesignSpace.interval(-1, 1))
    assert admissibility_probe(represent_E(3), model).passed


def test_A_fails_on_singular_probe():
    # a single-point space gives a rank-one information matrix
    model = RegressionModel(monomials([0, 1]), RationalFunction.constant(1.0), DesignSpace(((0.5, 0.5),)))
    res = admissibility_probe(represent_A(2), model)
    assert not res.passed
    assert admissibility_probe(represent_E(2), model).passed


def test_A_passes_on_radiation_model():
    model = radiation_model()
    assert admissibility_probe(represent_A(model.m), model).passed


# --------------------------------------------------------------------------
# custom representations


def _custom_E(m):
    pairs = [(p, q) for p in range(m) for q in range(p, m)]
    A = []
    for p, q in pairs:
        G = np.zeros((m, m))
        G[p, q] = G[q, p] = 1.0
        A.append(G.tolist())
    return {"name": "myE", "l": 0, "blocks": [{"A": A, "B": (-np.eye(m)).tolist(), "D": np.zeros((m, m)).tolist()}]}


def test_custom_matches_builtin():
    rep = custom_representation(_custom_E(3), 3)
    rng = np.random.default_rng(3)
    for _ in range(5):
        X = random_pd(rng, 3)
        assert max_feasible_z(rep, X) == pytest.approx(phi_E(X), rel=1e-7)
    assert verify_representation(rep, trials=20, reference=phi_E) == []


def test_custom_verification_catches_wrong_reference():
    rep = custom_representation(_custom_E(2), 2)
    issues = verify_representation(rep, trials=5, reference=lambda X: float(np.trace(X)))
    assert issues


def test_custom_rejects_asymmetric_B():
    spec = _custom_E(2)
    spec["blocks"][0]["B"] = [[-1.0, 1.0], [0.0, -1.0]]
    with pytest.raises(ValueError):
        custom_representation(spec, 2)


def test_builtin_representations_pass_their_own_verification():
    for name in "EAD":
        assert verify_representation(represent(name, 3), trials=20, reference=DIRECT[name]) == []
    assert Polynomial.constant(1.0).degree == 0
