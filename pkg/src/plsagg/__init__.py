"""Penalized least-squares aggregation of a fixed regression dictionary."""

__version__ = "0.1.0"

from .core import (
    BudgetExceededError,
    DesignMatrix,
    GramInfo,
    InvalidInputError,
    PreconditionError,
    TargetVector,
    WeightVector,
    combine,
    empirical_norm_sq,
    gram,
    rss,
)
from .oracles import (
    ConvexSolverConfig,
    OracleResult,
    all_oracles,
    convex_oracle,
    linear_oracle,
    maurey_grid_oracle,
    ms_oracle,
    x_n_m,
)
from .aggregators import (
    FitResult,
    PenaltySpec,
    fit,
    fit_hard_threshold,
    fit_soft_threshold,
    l1_weights,
    penalized_objective,
    penalty_hard,
    soft_threshold_scalar,
)
from .hardness import (
    BinaryCode,
    HardInstance,
    chi2_tail_bound,
    kl_gaussian_fixed_design,
    make_l_hard,
    make_ms_hard,
    minimax_eval,
    vg_code,
)
from .harness import (
    ExperimentConfig,
    ReplicationRecord,
    event_a_diagnostic,
    gen_data,
    psi_rate,
    rate_slope,
    run_experiment,
    slope_from_result,
)
