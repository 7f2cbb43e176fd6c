"""H-convergence experiments for monotone operators on Carnot groups."""
from ._kernels import BACKEND
from .discretization import (
    Grid,
    HorizontalField,
    ScalarField,
    div_G,
    dual_norm,
    field_pairing,
    grad_G,
    lp_norm,
    pairing,
    v_norm,
)
from .errors import ConfigError, ConvergenceError
from .groups import CarnotGroup, Polynomial, dilate, horizontal_projection, make_euclidean, make_heisenberg, parse_group
from .operators import (
    MembershipReport,
    OperatorSpec,
    custom_operator,
    eval_operator,
    identity_operator,
    linear_matrix,
    oscillate,
    parse_coefficient,
    scalar_p_laplacian,
    verify_membership,
)
from .solver import SolveReport, WeakProblem, solve, verify_estimates

__version__ = "0.1.0"
