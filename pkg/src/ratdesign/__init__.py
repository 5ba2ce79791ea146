"""Optimal approximate designs for linear models built from rational functions.

The support of a Phi-optimal design is found among the real roots of a
polynomial that is nonnegative on the design space and comes out of one
semidefinite program; a second small SDP gives the weights.
"""

__version__ = "0.1.0"

from .assembler import DesignProblem, assemble, extract_pi, pi_degree, support_bound  # noqa: E402
from .criteria import represent  # noqa: E402
from .exprmodel import NonlinearModel, RegressionModel, linearize, parse  # noqa: E402
from .pipeline import PipelineSettings, run  # noqa: E402
from .polycore import DesignSpace, Polynomial, RationalFunction  # noqa: E402
from .recovery import Design, grid_oracle, recover_weights, verify_design  # noqa: E402

__all__ = [
    "Design",
    "DesignProblem",
    "DesignSpace",
    "NonlinearModel",
    "PipelineSettings",
    "Polynomial",
    "RationalFunction",
    "RegressionModel",
    "assemble",
    "extract_pi",
    "grid_oracle",
    "linearize",
    "parse",
    "pi_degree",
    "recover_weights",
    "represent",
    "run",
    "support_bound",
    "verify_design",
]
