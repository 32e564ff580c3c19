"""Poisson-process models of rating-platform data under Zipf-law constraints."""

__version__ = "0.1.0"

from .errors import (
    BracketError,
    ConfigError,
    DomainError,
    EvaluationError,
    FitError,
    GaugeOrderingError,
    InitError,
    ParseError,
)
from .homogeneous import (
    PairEquation,
    ZipfDirection,
    counting_form_feasibility,
    homogeneity_consistency_report,
    lambda_closed_form,
    pmf_poisson,
)
from .inhomogeneous import (
    EquationSystem,
    ModelParams,
    PairStrategy,
    ResidualForm,
    build_system,
    check_constraints,
    gauge_transform,
    log_pmf,
    residual,
    residual_vector,
)
from .numerics import Bracket, ScalarResult, find_root, log_factorial, minimize_scalar
from .solver import SolveReport, SolverOptions, InhomogeneousSolution, local_solve, solve, verify
