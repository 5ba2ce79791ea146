import numpy as np
import pytest

from ratdesign import sdpsolver as sdp
from ratdesign.assembler import (
    AssemblyError,
    DegeneratePi,
    DesignProblem,
    EstimabilityError,
    assemble,
    assemble_full,
    assemble_subsystem,
    constant_in_span,
    dual_matrices,
    dual_V,
    evaluate_pi_rows,
    extract_pi,
    moment_functions,
    multiplier,
    optimal_value,
    pi_degree,
    pi_direct,
    pi_polynomial,
    rescale_basis,
    support_bound,
)
from ratdesign.criteria import represent
from ratdesign.exprmodel import RegressionModel
from ratdesign.modelfile import load_model
from ratdesign.polycore import LEGENDRE, MONOMIAL, DesignSpace, Polynomial, RationalFunction, change_basis
from ratdesign.recovery import grid_oracle

from conftest import monomials, poly_model, radiation_model


def random_psd(rng, n):
    G = rng.standard_normal((n, n))
    return G @ G.T


def solve(asdp):
    sol = sdp.solve(asdp.problem)
    assert sol.status == sdp.Status.OPTIMAL
    return sol


# --------------------------------------------------------------------------
# moment functions, degrees, bounds


def test_moment_functions_monomials():
    model = poly_model(range(1, 9))
    F = moment_functions(model)
    t = np.linspace(-1, 1, 5)
    for i in range(8):
        for j in range(8):
            np.testing.assert_allclose(F[i, j](t), t ** (i + j + 2), atol=1e-15)


def test_moment_functions_intercept_slope():
    F = moment_functions(poly_model([0, 1]))
    t = np.array([-0.5, 0.3, 2.0])
    np.testing.assert_allclose(F[0, 0](t), 1.0)
    np.testing.assert_allclose(F[0, 1](t), t)
    np.testing.assert_allclose(F[1, 1](t), t**2)


def test_moment_functions_radiation():
    F = moment_functions(radiation_model())
    t = np.linspace(-1, 1, 7)
    x = (-2.0, 2.0, 4.0)
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(F[i, j](t), (t - x[i]) ** -2 * (t - x[j]) ** -2, rtol=1e-12)


@pytest.mark.parametrize(
    "model, d, bound",
    [
        (lambda: poly_model(range(4)), 6, 4),
        (lambda: poly_model(range(1, 9)), 16, 9),
        (radiation_model, 12, 7),
        (lambda: poly_model(range(4), space=tuple((x, x) for x in (-1.0, 0.0, 0.5, 2.0))), 6, 5),
        (lambda: poly_model(range(4), space=((-1.0, 1.0), (2.0, 2.0))), 6, 4),
        (lambda: load_model("legendre20_e").model, 40, 21),
    ],
)
def test_degree_and_support_bound(model, d, bound):
    model = model()
    assert pi_degree(model) == d
    assert support_bound(model) == bound


def test_heteroscedastic_cubic_degree():
    # weight 1/(1+t^2) with cubic monomials: d_den = 2 plus growth -2 + 6 = 4
    model = load_model("hetero_cubic_a").model
    assert multiplier(model).degree == 2
    assert pi_degree(model) == 6
    assert support_bound(model) == 4


def test_radiation_multiplier_degree():
    assert multiplier(radiation_model()).degree == 12


# --------------------------------------------------------------------------
# structure of the assembled problem


def test_pi_equations_count_and_block_sizes():
    model = load_model("hetero_cubic_a").model
    asdp = assemble(DesignProblem(model, "A"))
    lo, hi = asdp.rows["Pi"]
    assert hi - lo == asdp.d + 1
    sizes = [asdp.problem.blocks[i].size for i in asdp.pi_index_map["W"]]
    assert sizes == [5, 5, 5, 5, 1]
    assert asdp.problem.blocks[asdp.pi_index_map["pi"]].size == asdp.d + 1


def test_zeropoly_pi_map():
    model = poly_model([0, 1])
    asdp = assemble(DesignProblem(model, "E"))
    W = np.array([[0.7, 0.2], [0.2, 0.3]])
    p = change_basis(pi_polynomial(asdp, 1.3, [W]), MONOMIAL)
    den0 = asdp.den_poly.coeffs[0]
    np.testing.assert_allclose(p.coeffs / den0, [1.3 - 0.7, -2 * 0.2, -0.3], atol=1e-14)


def test_no_intercept_pi_map():
    model = poly_model(range(1, 9))
    asdp = assemble(DesignProblem(model, "E"))
    rng = np.random.default_rng(0)
    W = random_psd(rng, 8)
    y = 0.25
    p = change_basis(pi_polynomial(asdp, y, [W]), MONOMIAL).coeffs / asdp.den_poly.coeffs[0]
    assert p[0] == pytest.approx(y)
    assert p[1] == 0.0
    for k in range(2, 17):
        ref = -sum(W[i - 1, j - 1] for i in range(1, 9) for j in range(1, 9) if i + j == k)
        assert p[k] == pytest.approx(ref, abs=1e-12)


CASES = [
    ("E", lambda: poly_model(range(1, 9)), None),
    ("A", lambda: load_model("hetero_cubic_a").model, None),
    ("D", radiation_model, None),
    ("D", lambda: load_model("emax_d").model, None),
    ("E", lambda: poly_model(range(3)), np.array([[1.0], [0.0], [0.0]])),
    ("D", lambda: load_model("emax_chi_k").model, load_model("emax_chi_k").K),
]


@pytest.mark.parametrize("crit, model, K", CASES)
def test_pi_map_against_direct_evaluation(crit, model, K):
    model = model()
    asdp = assemble(DesignProblem(model, crit, K))
    rng = np.random.default_rng(42)
    Ws = [random_psd(rng, blk.size) for blk in asdp.rep.blocks]
    V = None if K is None else random_psd(rng, model.m)
    y = float(rng.standard_normal())
    lo, hi = model.space.hull
    t = rng.uniform(lo, hi, 30)
    poly = pi_polynomial(asdp, y, Ws, V)
    direct = pi_direct(asdp, y, Ws, t, V)
    scale = np.max(np.abs(direct))
    np.testing.assert_allclose(poly(t), direct, rtol=1e-8, atol=1e-8 * scale)
    # third route: the node equations the SDP itself imposes
    leg = Polynomial(evaluate_pi_rows(asdp, y, Ws, V), LEGENDRE, asdp.hull)
    np.testing.assert_allclose(leg(t), direct, rtol=1e-8, atol=1e-8 * scale)


# --------------------------------------------------------------------------
# solved problems


def test_no_intercept_dual_trace_and_pi_roots(solved):
    spec, res = solved("noint_e8")
    asdp = assemble(DesignProblem(spec.model, "E"))
    sol = solve(asdp)
    (W,) = dual_matrices(asdp, sol)
    assert np.trace(W) == pytest.approx(1.0, abs=1e-8)
    pi = extract_pi(asdp, sol)
    assert pi.degree == 16


def test_hetero_cubic_A_dual_structure():
    model = load_model("hetero_cubic_a").model
    asdp = assemble(DesignProblem(model, "A"))
    sol = solve(asdp)
    Ws = dual_matrices(asdp, sol)
    assert Ws[4][0, 0] == pytest.approx(1.0, abs=1e-8)
    for W in Ws[:4]:
        assert W[4, 4] == pytest.approx(1.0, abs=1e-8)


def test_zeropoly_pi_vanishes_then_rescaling_helps():
    model = poly_model([0, 1])
    assert constant_in_span(model)
    asdp = assemble(DesignProblem(model, "E"))
    sol = solve(asdp)
    assert optimal_value(asdp, sol) == pytest.approx(1.0, abs=1e-7)
    scaled = rescale_basis(model, 0.5)
    asdp2 = assemble(DesignProblem(scaled, "E"))
    sol2 = solve(asdp2)
    pi = change_basis(extract_pi(asdp2, sol2), MONOMIAL)
    # with basis (1, t/2) the optimal pi is a multiple of 1 - t^2
    c = pi.coeffs / pi.coeffs[0]
    np.testing.assert_allclose(c, [1.0, 0.0, -1.0], atol=1e-6)


def test_degenerate_pi_signal():
    asdp = assemble(DesignProblem(poly_model([0, 1]), "E"))
    sol = solve(asdp)
    zero = sdp.SdpSolution(sol.status, [v * 0 for v in sol.x], sol.y, sol.s, 0, 0, 0, 0, 0, 0)
    zero.x[0] = sol.x[0]
    with pytest.raises(DegeneratePi):
        extract_pi(asdp, zero)


def test_identity_K_matches_full_problem():
    model = poly_model(range(3))
    full = assemble_full(DesignProblem(model, "E"))
    sub = assemble_subsystem(DesignProblem(model, "E", np.eye(3)))
    a = optimal_value(full, solve(full))
    sol = sdp.solve(sub.problem)
    assert sol.optimal or max(sol.pinf, sol.dinf, sol.gap) <= 1e-6
    b = optimal_value(sub, sol)
    assert b == pytest.approx(a, rel=1e-5)


def test_single_combination_matches_grid_oracle():
    model = poly_model(range(3))
    K = np.array([[1.0], [0.0], [0.0]])
    asdp = assemble(DesignProblem(model, "E", K))
    sol = solve(asdp)
    y = optimal_value(asdp, sol)
    assert np.isfinite(y) and y > 0
    oracle = grid_oracle(model, represent("E", 1), 401, K=K)
    assert y >= oracle.phi_value - 1e-7
    assert y == pytest.approx(oracle.phi_value, rel=1e-3)
    assert dual_V(asdp, sol).shape == (3, 3)


def test_estimability_checked():
    model = RegressionModel(monomials([0, 1]), RationalFunction.constant(1.0), DesignSpace(((0.5, 0.5),)))
    with pytest.raises(EstimabilityError):
        assemble(DesignProblem(model, "E", np.array([[0.0], [1.0]])))
    asdp = assemble(DesignProblem(model, "E", np.array([[1.0], [0.5]])))
    assert asdp.pi_index_map["V"] is not None
    with pytest.raises(EstimabilityError):
        DesignProblem(model, "E", np.array([[1.0, 2.0], [1.0, 2.0]]))
    with pytest.raises(EstimabilityError):
        DesignProblem(model, "E", np.ones((3, 1)))


def test_variant_mismatch_rejected():
    model = poly_model(range(2))
    with pytest.raises(AssemblyError):
        assemble_full(DesignProblem(model, "E", np.eye(2)))
    with pytest.raises(AssemblyError):
        assemble_subsystem(DesignProblem(model, "E"))


def test_degree_cap():
    model = RegressionModel(monomials([0, 33]), RationalFunction.constant(1.0), DesignSpace.interval(-1, 1))
    assert pi_degree(model) == 66
    with pytest.raises(AssemblyError, match="maximum"):
        assemble(DesignProblem(model, "E"))


# --------------------------------------------------------------------------
# rescaling


def test_rescale_basis_examples():
    model = poly_model([0, 1])
    scaled = rescale_basis(model, 0.5)
    t = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(scaled.features(t), np.stack([np.ones(5), 0.5 * t], axis=1))
    no_const = poly_model([1, 2])
    assert rescale_basis(no_const, 0.5) is no_const
    assert not constant_in_span(no_const)
    # default factor keeps 0.5 / max |f_i| on the space
    wide = poly_model([0, 1], space=((-4.0, 2.0),))
    np.testing.assert_allclose(rescale_basis(wide).features([-4.0]), [[1.0, -0.5]])
    with pytest.raises(ValueError):
        rescale_basis(model, 0.0)
