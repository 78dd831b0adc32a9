"""Deterministic battery of numerical checks on the tail, grid and divergence bounds."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DesignMatrix
from .hardness import chi2_tail_bound, kl_gaussian_fixed_design, make_l_hard, make_ms_hard, vg_code
from .harness import ExperimentConfig, event_a_diagnostic
from .oracles import ConvexSolverConfig, convex_oracle, maurey_grid_oracle


@dataclass(frozen=True)
class CheckResult:
    name: str
    anchor: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name} [{self.anchor}] measured={self.measured!r} "
                f"bound={self.bound!r} {self.detail}").rstrip()


def chi2_tail_mc(d: int, x: float, draws: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo tail ``P{Z_d - d >= x sqrt(2d)}`` and its standard error."""
    z = rng.chisquare(d, size=draws)
    p = float(np.mean(z - d >= x * math.sqrt(2 * d)))
    return p, math.sqrt(max(p * (1 - p), 1.0 / draws) / draws)


def check_chi2(draws: int = 200_000, seed: int = 11,
               bound_fn: Callable[[int, float], float] = chi2_tail_bound) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    worst_case = None
    for d, x in itertools.product((1, 5, 20, 100), (0.5, 1.0, 2.0, 4.0)):
        p, se = chi2_tail_mc(d, x, draws, rng)
        b = bound_fn(d, x)
        excess = p - 3 * se - b
        if excess > worst:
            worst, worst_case = excess, (d, x, p, b)
    d, x, p, b = worst_case
    return CheckResult("chi2-tail", "chi-square deviation bound", worst <= 0, p, b,
                       f"worst=(d={d},x={x})")


def check_maurey(trials: int = 200, seed: int = 12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    cfg = ConvexSolverConfig(gap_tol=1e-9)
    meas = bnd = 0.0
    for _ in range(trials):
        m_dict = int(rng.integers(2, 6))
        n = int(rng.integers(5, 30))
        m = int(rng.integers(1, 5))
        L = 1.0
        F = rng.uniform(-L, L, size=(n, m_dict))
        f = rng.uniform(-L, L, size=n)
        design = DesignMatrix(F, bound_l=L)
        grid = maurey_grid_oracle(design, f, m).risk
        simplex = convex_oracle(design, f, cfg).risk
        slack = grid - (simplex + L**2 / m)
        if slack > worst:
            worst, meas, bnd = slack, grid, simplex + L**2 / m
    return CheckResult("maurey-grid", "grid approximation of the convex oracle", worst <= 1e-6, meas, bnd,
                       f"trials={trials}")


def check_event_a(reps: int = 20_000) -> CheckResult:
    cfg = ExperimentConfig(n_grid=(100,), m_dict=10, sigma=1.0, seed=13)
    rep = event_a_diagnostic(cfg, reps)
    return CheckResult("event-A", "union bound on noise correlations", rep.ok, rep.frequency,
                       rep.bound + rep.mc_margin, f"failures={rep.failures}/{rep.reps}")


def check_kl_budgets() -> CheckResult:
    worst = -math.inf
    meas = bnd = 0.0
    instances = [make_ms_hard(64, 16, 1.0), make_ms_hard(16, 4, 1.0), make_ms_hard(8, 2, 0.5),
                 make_l_hard(16, 8, 1.0), make_l_hard(20, 16, 1.0), make_l_hard(10, 4, 2.0)]
    for inst in instances:
        truths = inst.truth_set if inst.card <= 300 else None
        if truths is not None:
            kl = max(kl_gaussian_fixed_design(a, b, inst.design.n, inst.sigma)
                     for a, b in itertools.combinations(truths, 2))
        else:
            kl = inst.kl_max
        if kl - inst.kl_budget > worst:
            worst, meas, bnd = kl - inst.kl_budget, kl, inst.kl_budget
    return CheckResult("kl-budget", "divergence budget log(N)/16", worst <= 1e-12, meas, bnd,
                       f"instances={len(instances)}")


def check_vg_codes() -> CheckResult:
    worst = math.inf
    meas = bnd = 0.0
    for m in (8, 16):
        code = vg_code(m)
        ratio = code.card / 2 ** (m / 8)
        if ratio < worst:
            worst, meas, bnd = ratio, code.card, 2 ** (m / 8)
    return CheckResult("vg-code", "code cardinality 2^(M/8)", worst >= 1, meas, bnd)


def run_checks(chi2_bound: Callable[[int, float], float] = chi2_tail_bound) -> list[CheckResult]:
    return [
        check_chi2(bound_fn=chi2_bound),
        check_maurey(),
        check_event_a(),
        check_kl_budgets(),
        check_vg_codes(),
    ]
