"""End-to-end design computation: assemble, solve, find roots, weigh, verify."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import sdpsolver as sdp
from .assembler import (
    AssembledSdp,
    DegeneratePi,
    DesignProblem,
    assemble,
    constant_in_span,
    extract_pi,
    has_constant_basis,
    min_integral_probe,
    optimal_value,
    pi_coefficients,
    pi_integral_weights,
    rescale_basis,
    rescale_factor,
    support_bound,
)
from .exprmodel import RegressionModel
from .polycore import Polynomial
from .recovery import Design, VerificationReport, recover_weights, support_candidates, verify_design

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DEGENERATE = 2

# a near-optimal iterate is accepted (and flagged) when all residuals are below this
NEAR_OPTIMAL = 1e-6
# min-integral probe: pi = 0 is taken to be optimal below this fraction of the original integral
DEGENERATE_RATIO = 1e-3


@dataclass(frozen=True)
class PipelineSettings:
    tol: float = 1e-8
    max_iters: int = 100
    root_tol: float = 1e-4
    rescale_lambda: float | None = None

    def solver(self) -> sdp.SolverSettings:
        return sdp.SolverSettings(tol=self.tol, max_iters=self.max_iters)


@dataclass
class SolveAttempt:
    asdp: AssembledSdp
    sol: sdp.SdpSolution
    y: float
    pi: Polynomial | None
    reduced_accuracy: bool
    degenerate: bool
    probe_ratio: float | None = None

    def stats(self) -> dict:
        s = self.sol
        return {
            "status": s.status.value,
            "iterations": s.iterations,
            "gap": s.gap,
            "primal_infeasibility": s.pinf,
            "dual_infeasibility": s.dinf,
            "reduced_accuracy": self.reduced_accuracy,
        }


@dataclass
class PipelineResult:
    exit_code: int
    message: str
    design: Design | None = None
    y: float | None = None
    pi: Polynomial | None = None
    d: int | None = None
    support_bound: int | None = None
    candidates: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    report: VerificationReport | None = None
    rescaled: bool = False
    rescale_lambda: float | None = None
    notes: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


class SolverFailure(RuntimeError):
    pass


def _accept(sol: sdp.SdpSolution) -> bool:
    """Whether ``sol`` is usable; a near-optimal non-converged iterate is flagged by the caller."""
    if sol.status == sdp.Status.OPTIMAL:
        return True
    return bool(max(sol.pinf, sol.dinf, sol.gap) <= NEAR_OPTIMAL)


def _degeneracy_ratio(asdp: AssembledSdp, sol: sdp.SdpSolution, y: float, settings: sdp.SolverSettings) -> float:
    """Smallest integral of ``pi`` over near-optimal points, relative to the solution's own."""
    w = pi_integral_weights(asdp)
    base = float(w @ pi_coefficients(asdp, sol))
    if base <= 0.0:
        return 0.0
    probe = min_integral_probe(asdp, y, settings)
    low = asdp.scale * float(w @ probe.x[asdp.pi_index_map["pi"]])
    if not np.isfinite(low):
        return 1.0
    return max(low, 0.0) / base


def solve_once(problem: DesignProblem, settings: PipelineSettings, probe_degeneracy: bool = True) -> SolveAttempt:
    """Assemble and solve one support-finding SDP.

    Raises
    ------
    SolverFailure
        When the solver neither converges nor ends near optimal.
    """
    asdp = assemble(problem)
    sol = sdp.solve(asdp.problem, settings.solver())
    if not _accept(sol):
        raise SolverFailure(
            f"SDP solver ended with status {sol.status.value} "
            f"(gap {sol.gap:.2e}, pinf {sol.pinf:.2e}, dinf {sol.dinf:.2e})"
        )
    y = optimal_value(asdp, sol)
    try:
        pi = extract_pi(asdp, sol)
    except DegeneratePi:
        return SolveAttempt(asdp, sol, y, None, sol.status != sdp.Status.OPTIMAL, True, 0.0)
    ratio = None
    degenerate = False
    if probe_degeneracy and constant_in_span(problem.model):
        ratio = _degeneracy_ratio(asdp, sol, y, settings.solver())
        degenerate = ratio < DEGENERATE_RATIO
    return SolveAttempt(asdp, sol, y, pi, sol.status != sdp.Status.OPTIMAL, degenerate, ratio)


def _rescaled_problem(problem: DesignProblem, lam: float) -> DesignProblem:
    model = problem.model
    scaled = rescale_basis(model, lam)
    K = problem.K
    if K is not None:
        # f_i -> c_i f_i turns theta_i into theta_i / c_i, so K^T theta = (diag(c) K)^T theta'
        c = np.array([1.0 if f.is_constant() else lam for f in model.basis])
        K = c[:, None] * K
    return DesignProblem(scaled, problem.criterion, K)


def run(
    model: RegressionModel,
    criterion="E",
    K=None,
    settings: PipelineSettings | None = None,
) -> PipelineResult:
    """Compute and verify an optimal design.

    When ``pi`` vanishes, or a zero ``pi`` is optimal as well, the
    non-constant basis functions are rescaled once and the support is taken
    from the rescaled problem.  Weights are always computed for the original
    model and checked against its optimal value.
    """
    settings = settings or PipelineSettings()
    t0 = time.perf_counter()
    problem = DesignProblem(model, criterion, K)
    rep = problem.representation()
    bound = support_bound(model, rep)
    result = PipelineResult(EXIT_FAILURE, "", support_bound=bound)
    try:
        first = solve_once(problem, settings)
    except SolverFailure as exc:
        result.message = str(exc)
        result.timings["total"] = time.perf_counter() - t0
        return result
    result.y, result.d, result.solver = first.y, first.asdp.d, first.stats()
    if first.reduced_accuracy:
        result.notes.append(f"solver stopped with {first.sol.status.value}; using its near-optimal iterate")
    attempt = first
    if first.degenerate:
        result.notes.append(
            "pi = 0 is optimal for this basis"
            + (f" (min-integral ratio {first.probe_ratio:.1e})" if first.probe_ratio is not None else "")
        )
        if not has_constant_basis(model):
            result.exit_code = EXIT_DEGENERATE
            result.message = "degenerate support polynomial and no constant basis function to rescale against"
            result.timings["total"] = time.perf_counter() - t0
            return result
        lam = settings.rescale_lambda if settings.rescale_lambda is not None else rescale_factor(model)
        result.rescaled, result.rescale_lambda = True, float(lam)
        try:
            attempt = solve_once(_rescaled_problem(problem, lam), settings)
        except SolverFailure as exc:
            result.message = f"after rescaling: {exc}"
            result.timings["total"] = time.perf_counter() - t0
            return result
        result.notes.append(f"rescaled non-constant basis functions by {lam:.6g} and re-solved")
        result.solver["rescaled"] = attempt.stats()
        if attempt.degenerate:
            result.exit_code = EXIT_DEGENERATE
            result.message = "support polynomial still degenerate after rescaling"
            result.timings["total"] = time.perf_counter() - t0
            return result
    t_solve = time.perf_counter()
    pi = attempt.pi
    result.pi = pi
    result.candidates = support_candidates(pi, model.space, settings.root_tol)
    result.design = recover_weights(model, result.candidates, rep, K=problem.K)
    result.report = verify_design(model, result.design, rep, pi, first.y, K=problem.K, support_bound=bound)
    result.notes.extend(result.report.notes)
    t_end = time.perf_counter()
    result.timings = {"solve": t_solve - t0, "weights_and_checks": t_end - t_solve, "total": t_end - t0}
    if result.report.passed:
        result.exit_code = EXIT_OK
        result.message = "verified optimal"
    else:
        failed = ", ".join(k for k, ok in result.report.checks.items() if not ok)
        result.message = f"verification failed: check(s) {failed}"
    return result
