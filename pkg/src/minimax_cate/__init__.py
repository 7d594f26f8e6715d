"""Minimax-MSE aggregation of group-level treatment effect estimators."""

from .closed_form import Solution, candidate_weights, g_bar, scan_gbar_check, solve_minimax, sort_groups
from .core import MseDecomposition, Problem, adversarial_cates, estimate, validate_problem, worst_case_mse
from .designs import (
    DidDesign,
    RctDesign,
    Stratum,
    Unit,
    did_covariance,
    did_design_from_panel,
    did_linear_representation,
    did_to_problem,
    fe_weights,
    psm_weights,
    rct_to_problem,
    treated_cells,
)
from .errors import MinimaxError
from .oracle import GridSpec, grid_search
from .qp import QpSettings, kkt_residual, solve_qp
from .simulate import McConfig, McReport, ols_fe_equivalence, simulate_did, simulate_rct

__version__ = "0.1.0"
