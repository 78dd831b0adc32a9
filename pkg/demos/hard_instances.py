"""
Instances where no aggregate beats the rate
===========================================

Two families of regression problems are built so that their truths are well
separated but statistically hard to tell apart.  Any estimator pays a risk
of the order of the separation; here the hard-threshold aggregate is
evaluated on each truth and its worst-case risk is reported.
"""

from plsagg import PenaltySpec, fit_hard_threshold, make_l_hard, make_ms_hard, minimax_eval, vg_code

code = vg_code(16)
print(f"greedy code, length 16: {code.card} words, distances {code.min_distance}..{code.max_distance}")

spec = PenaltySpec("HardThreshold", sigma=1.0)


def aggregate(design, y, truth):
    return design.values @ fit_hard_threshold(design, y, spec).weights.coeffs


for inst in (make_ms_hard(64, 8, 1.0), make_l_hard(64, 8, 1.0)):
    rep = minimax_eval(inst, aggregate, reps=20, seed=0, truths=range(min(inst.card, 16)))
    print(f"{inst.kind}: {inst.card} truths, separation {inst.separation_min:.5f}, "
          f"KL {inst.kl_max:.4f} <= budget {inst.kl_budget:.4f}")
    print(f"  worst mean risk {rep.max_risk:.5f} +/- {rep.max_se:.5f} (truth {rep.worst_truth}), "
          f"ratio to separation {rep.max_risk / inst.separation_min:.2f}")
