"""
Oracles versus data-driven aggregates
=====================================

A cosine dictionary is fitted to a noisy step function.  The three oracles
show the best achievable risk for a single element, a convex combination
and an unrestricted linear combination.  The two penalized aggregates
only see the noisy observations.
"""

import numpy as np

from plsagg import (
    ExperimentConfig,
    PenaltySpec,
    all_oracles,
    empirical_norm_sq,
    fit_hard_threshold,
    fit_soft_threshold,
    gen_data,
)

# A step truth sits outside the span of 16 cosines, so all oracle risks are positive.
cfg = ExperimentConfig(n_grid=(200,), m_dict=16, truth_kind="outside-span",
                       truth_function="step", truth_amplitude=0.8, sigma=0.5, seed=3)
design, targets = gen_data(cfg, rep=0)
print(f"n = {design.n}, M = {design.m_dict}, L = {design.bound_l:.3f}")

# Oracles use the noise-free truth.
for kind, res in all_oracles(design, targets.f_vals).items():
    print(f"{kind:>2} oracle  risk {res.risk:.5f}  nonzeros {res.weights.sparsity:2d}")

# Aggregates use only y.
hard = fit_hard_threshold(design, targets.y_vals, PenaltySpec("HardThreshold", sigma=0.5))
soft = fit_soft_threshold(design, targets.y_vals, PenaltySpec("SoftThresholdL1", sigma=0.5))
for name, res in (("hard threshold", hard), ("weighted l1", soft)):
    risk = empirical_norm_sq(design.values @ res.weights.coeffs - targets.f_vals)
    print(f"{name:>14}: risk {risk:.5f}  support {res.weights.support}  ({res.solver_meta['mode']})")

# The least-squares fit on all columns overfits the noise.
lam = np.linalg.lstsq(design.values, targets.y_vals, rcond=None)[0]
print(f"full least squares risk {empirical_norm_sq(design.values @ lam - targets.f_vals):.5f}")
