"""
The worst-case bound is attained
================================

For the symmetric two-stratum design the minimax weights are (1/3, 1/3) at
``B = 1``. Putting every stratum effect at ``+B`` sigma (the sign pattern that
maximizes the bias of those weights) makes the simulated MSE match the bound.
"""

# %%
from minimax_cate import solve_minimax
from minimax_cate.designs import RctDesign, Stratum, psm_weights, rct_to_problem
from minimax_cate.simulate import McConfig, simulate_rct

design = RctDesign((Stratum(2, 2), Stratum(2, 2)))
problem = rct_to_problem(design, 1.0)
w = solve_minimax(problem).w
print("minimax weights", w, "bound", solve_minimax(problem).mse.total)

# %%
config = McConfig(
    reps=1_000_000,
    seed=2024,
    estimators={"minimax": w, "psm": psm_weights(design)},
    tau_rule="adversarial",
    w_ref=w,
    B=1.0,
)
report = simulate_rct(design, config)
for name, s in report.estimators.items():
    print(f"{name:8s} bias={s.bias:+.4f}  variance={s.variance:.4f}  mse={s.mse:.4f} +- {s.mse_se:.4f}")

# %%
# The population-share weights are unbiased, so their MSE is their variance,
# 0.5, which is above the minimax value of 1/3 at this bound.
