"""Semilinear HJB equations on the half-line with an absorbing barrier."""

from .diffusion import (
    DiffusionSpec,
    PathBatch,
    bm_stopped_time_analytic,
    expected_stopped_time_mc,
    hitting_lipschitz_probe,
    lamperti_transform,
    simulate_paths,
    stopped_time_lipschitz_bound,
)
from .estimators import ConsumptionOptimizer, DividendOptimizer, HalfLineHJBSolver, LinearCauchyDirichletSolver
from .expr import CoeffExpr, ExprError, parse_expr, to_source
from .fixedpoint import (
    ConvergenceError,
    PolicyGrid,
    SemilinearProblem,
    SolveReport,
    apply_T,
    choose_kappa,
    estimate_contraction,
    picard_solve,
    verify_residual,
)
from .grid import Grid2D, GridFunction, fd_derivative_x, sup_norm, weighted_norm, weighted_sup_norm
from .hamiltonian import CoefficientError, ControlSet, HJBCoefficients, evaluate_hamiltonian, probe_growth
from .linear_pde import LinearProblem, evaluate_feynman_kac, solve_fd

__version__ = "0.1.0"

__all__ = [
    "CoeffExpr",
    "CoefficientError",
    "ConsumptionOptimizer",
    "ControlSet",
    "ConvergenceError",
    "DiffusionSpec",
    "DividendOptimizer",
    "ExprError",
    "Grid2D",
    "GridFunction",
    "HJBCoefficients",
    "HalfLineHJBSolver",
    "LinearCauchyDirichletSolver",
    "LinearProblem",
    "PathBatch",
    "PolicyGrid",
    "SemilinearProblem",
    "SolveReport",
    "apply_T",
    "bm_stopped_time_analytic",
    "choose_kappa",
    "estimate_contraction",
    "evaluate_feynman_kac",
    "evaluate_hamiltonian",
    "expected_stopped_time_mc",
    "fd_derivative_x",
    "hitting_lipschitz_probe",
    "lamperti_transform",
    "parse_expr",
    "picard_solve",
    "probe_growth",
    "simulate_paths",
    "solve_fd",
    "stopped_time_lipschitz_bound",
    "sup_norm",
    "to_source",
    "verify_residual",
    "weighted_norm",
    "weighted_sup_norm",
]
