"""
Aggregating cell effects in a staggered-adoption panel
======================================================

Each treated (unit, period) cell has its own DID estimate. Cells share
control outcomes, so the estimates are correlated and the minimax weights
come from the box-constrained quadratic program instead of the closed form.
"""

# %%
import numpy as np

from minimax_cate import solve_qp, worst_case_mse
from minimax_cate.designs import DidDesign, Unit, did_covariance, did_to_problem, treated_cells

# one adoption cohort of two units, three never-treated units
design = DidDesign(
    T=4,
    units=(Unit("a", 3), Unit("b", 3), Unit("c", None), Unit("d", None), Unit("e", None)),
    control_rule="never",
)
print("cells:", treated_cells(design))
print(did_covariance(design))

# %%
for B in (0.25, 1.0, 4.0):
    problem = did_to_problem(design, B)
    sol = solve_qp(problem)
    base = worst_case_mse(problem, problem.p).total
    print(f"B={B:<5} w={np.round(sol.w, 4)}  worst-case MSE {sol.mse.total:.4f} vs {base:.4f} at w=p")

# %%
# With two cohorts the exact covariance contains negative entries: a cell
# observed at period 2 and the later cohort's baseline at period 2 load on the
# same control outcomes with opposite signs. The solver refuses such problems,
# but the worst-case MSE of any given weights can still be evaluated.
two_cohorts = DidDesign(T=3, units=(Unit("a", None), Unit("b", 2), Unit("c", 3)), control_rule="never")
M = did_covariance(two_cohorts)
print(M)
problem = did_to_problem(two_cohorts, 1.0)
print("worst-case MSE at w=p:", worst_case_mse(problem, problem.p).total)
