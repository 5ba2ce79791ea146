import numpy as np
import pytest
from hypothesis import settings

from ratdesign.modelfile import load_model, shipped_models
from ratdesign.pipeline import run
from ratdesign.polycore import DesignSpace, Polynomial, RationalFunction
from ratdesign.exprmodel import RegressionModel

settings.register_profile("ci", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("ci")


def monomials(degrees):
    out = []
    for k in degrees:
        c = np.zeros(k + 1)
        c[k] = 1.0
        out.append(RationalFunction(Polynomial(c)))
    return tuple(out)


def poly_model(degrees, space=((-1.0, 1.0),), weight=None):
    w = RationalFunction.constant(1.0) if weight is None else weight
    return RegressionModel(monomials(degrees), w, DesignSpace(tuple(space))).validate()


def radiation_model():
    basis = tuple(RationalFunction(Polynomial.constant(1.0), ((Polynomial([-x, 1.0]), 2),)) for x in (-2.0, 2.0, 4.0))
    return RegressionModel(basis, RationalFunction.constant(1.0), DesignSpace.interval(-1, 1)).validate()


def gauss_lobatto_d(m):
    """Zeros of (1 - t^2) dP_m/dt: the D-optimal support for degree-m polynomial regression.

    P_m comes from the three-term recurrence in monomial coefficients
    (highest power first), independent of the package's Legendre code.
    """
    prev, cur = np.array([1.0]), np.array([1.0, 0.0])
    for k in range(1, m):
        nxt = ((2 * k + 1) * np.append(cur, 0.0) - k * np.concatenate([[0.0, 0.0], prev])) / (k + 1)
        prev, cur = cur, nxt
    P = cur if m >= 1 else prev
    inner = np.roots(np.polyder(P)).real if m > 1 else np.array([])
    return np.sort(np.concatenate([[-1.0], inner, [1.0]]))


class _Solved:
    """Pipeline results for shipped models, computed once per session."""

    def __init__(self):
        self.cache = {}

    def __call__(self, name):
        if name not in self.cache:
            spec = load_model(name)
            self.cache[name] = (spec, run(spec.model, spec.criterion, spec.K))
        return self.cache[name]


@pytest.fixture(scope="session")
def solved():
    return _Solved()


SHIPPED = shipped_models()


# --------------------------------------------------------------------------
# acceptance summary

ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
