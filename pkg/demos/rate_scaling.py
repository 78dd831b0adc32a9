"""
Empirical rates of aggregation
==============================

When the truth is one dictionary element the excess risk of the
hard-threshold aggregate should fall like log(M)/n, a slope of -1 on the
log-log scale.  When M grows faster than sqrt(n) the excess over the best
convex combination should track sqrt(log(1 + M/sqrt(n))/n).
"""

import math

from plsagg import ExperimentConfig, psi_rate, run_experiment, slope_from_result

ns = (100, 200, 400, 800, 1600)

cfg = ExperimentConfig(n_grid=ns, m_dict=20, truth_index=5, reps=100, seed=1)
res = run_experiment(cfg)
for row in res.summary_for("MS"):
    print(f"n={row['n']:5d}  excess {row['mean_excess']:.5f} +/- {row['mc_se']:.5f}  "
          f"ratio to log(M)/n {row['ratio']:.2f}")
fit = slope_from_result(res, "MS")
print(f"log-log slope {fit.slope:.3f} +/- {fit.halfwidth:.3f}\n")

# Dictionary grows with n; truth is the uniform average of the dictionary.
for n in ns:
    m = 4 * math.ceil(math.sqrt(n))
    cfg = ExperimentConfig(n_grid=(n,), m_dict=m, truth_kind="convex-combo",
                           truth_weights="uniform", reps=50, seed=2)
    row = run_experiment(cfg).summary_for("C")[0]
    print(f"n={n:5d}  M={m:3d}  excess over convex oracle {row['mean_excess']:.4f}  "
          f"rate {psi_rate(n, m, 'C'):.4f}  ratio {row['ratio']:.2f}")
