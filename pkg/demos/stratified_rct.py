"""
Shrinking stratum estimates in an unbalanced experiment
=======================================================

Three strata with very different sizes. The unbiased aggregate weights each
stratum's difference in means by its population share. If the stratum effects
are known to lie within ``B`` standard deviations of zero, moving weight away
from the noisy strata trades a bounded bias for a lower variance.
"""

# %%
import numpy as np

from minimax_cate import solve_minimax, worst_case_mse
from minimax_cate.designs import RctDesign, Stratum, fe_weights, psm_weights, rct_to_problem

design = RctDesign((Stratum(n0=200, n1=200), Stratum(n0=40, n1=10), Stratum(n0=6, n1=2)))
print("shares   ", np.round(design.shares, 4))
print("variances", np.round(design.v, 4), "(in units of sigma^2)")

# %%
# Worst-case MSE of the three aggregations as the bound on the effects grows.
for B in (0.1, 0.5, 1.0, 3.0):
    problem = rct_to_problem(design, B)
    sol = solve_minimax(problem)
    row = {
        "psm": worst_case_mse(problem, psm_weights(design)).total,
        "fe": worst_case_mse(problem, fe_weights(design)).total,
        "minimax": sol.mse.total,
    }
    cells = "  ".join(f"{k}={v:.5f}" for k, v in row.items())
    print(f"B={B:<4} h*={sol.h_star}  w={np.round(sol.w, 4)}  {cells}")

# %%
# As B grows the minimax weights converge to the population shares: only the
# stratum with the largest ``p_g * v_g`` is still shrunk, by roughly
# ``p_g v_g / B^2``.
for B in (10.0, 100.0, 1000.0):
    sol = solve_minimax(rct_to_problem(design, B))
    print(f"B={B:<6} max |w - p| = {np.max(np.abs(sol.w - design.shares)):.3e}")
