"""Acceptance criteria, each run at its stated tolerance.

Run alone with ``pytest tests/test_acceptance.py``; a summary with one
PASS/FAIL line per criterion is printed at the end of the session.
"""

import itertools
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from plsagg.aggregators import HARD, SOFT, PenaltySpec, fit_hard_threshold, fit_soft_threshold
from plsagg.checks import check_chi2
from plsagg.core import DesignMatrix, empirical_norm_sq
from plsagg.hardness import kl_gaussian_fixed_design, make_l_hard, make_ms_hard, vg_code
from plsagg.harness import ExperimentConfig, event_a_bound, event_a_diagnostic, run_experiment, slope_from_result
from plsagg.oracles import ConvexSolverConfig, convex_oracle, linear_oracle, maurey_grid_oracle, ms_oracle

from agg_helpers import hard_bruteforce, l1_weights_ref, soft_grid_bruteforce
from conftest import orthonormal_design


def _soft_ref(z, r):
    return np.sign(z) * np.maximum(np.abs(z) - r, 0.0)


def test_orthonormal_closed_forms(acceptance):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_soft = 0.0
    support_ok = 0
    for _ in range(100):
        m = int(rng.integers(2, 51))
        n = int(rng.integers(m, 513))
        O = orthonormal_design(rng, n, m)
        coef = rng.normal(0, 1, m) * (rng.random(m) < 0.3)
        y = O.values @ coef + rng.uniform(0.2, 2.0) * rng.standard_normal(n)
        sigma = float(rng.uniform(0.3, 2.0))
        z = O.values.T @ y / n
        soft = fit_soft_threshold(O, y, PenaltySpec(SOFT, sigma=sigma), tol=1e-12)
        r = l1_weights_ref(O.values, sigma)
        worst_soft = max(worst_soft, float(np.max(np.abs(soft.weights.coeffs - _soft_ref(z, r / 2)))))
        hard = fit_hard_threshold(O, y, PenaltySpec(HARD, sigma=sigma), allow_greedy=False)
        on = np.zeros(m, bool)
        on[list(hard.weights.support)] = True
        a = np.abs(z)
        if on.all() or not on.any() or a[on].min() >= a[~on].max() - 1e-12:
            support_ok += 1
    elapsed = time.perf_counter() - start
    passed = worst_soft <= 1e-8 and support_ok == 100 and elapsed < 60
    acceptance(1, "orthonormal closed forms", passed,
               f"max soft deviation {worst_soft:.2e}, top-m supports {support_ok}/100, {elapsed:.1f}s")


def test_bruteforce_equivalence(acceptance):
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst_hard = 0.0
    for _ in range(100):
        m = int(rng.integers(2, 11))
        n = int(rng.integers(3, 60))
        F = rng.uniform(-1, 1, (n, m))
        y = F @ (rng.normal(0, 1, m) * (rng.random(m) < 0.4)) + rng.uniform(0.1, 1) * rng.standard_normal(n)
        k1 = float(rng.uniform(0.1, 4.0))
        res = fit_hard_threshold(DesignMatrix(F), y, PenaltySpec(HARD, k1=k1), method="exhaustive")
        val, _ = hard_bruteforce(F, y, k1)
        worst_hard = max(worst_hard, abs(res.objective - val))
    worst_soft = 0.0
    for _ in range(50):
        n = int(rng.integers(10, 80))
        F = rng.uniform(-1, 1, (n, 2))
        y = F @ rng.uniform(-1.5, 1.5, 2) + rng.uniform(0.1, 1) * rng.standard_normal(n)
        sigma = float(rng.uniform(0.1, 1.0))
        res = fit_soft_threshold(DesignMatrix(F), y, PenaltySpec(SOFT, sigma=sigma))
        val, _ = soft_grid_bruteforce(F, y, l1_weights_ref(F, sigma))
        if np.max(np.abs(res.weights.coeffs)) > 3:
            worst_soft = math.inf  # minimizer outside the grid box: the comparison is void
        worst_soft = max(worst_soft, abs(res.objective - val))
    elapsed = time.perf_counter() - start
    passed = worst_hard <= 1e-10 and worst_soft <= 1e-2 and elapsed < 120
    acceptance(2, "brute-force equivalence", passed,
               f"hard gap {worst_hard:.2e}, soft grid gap {worst_soft:.2e}, {elapsed:.1f}s")


def test_oracle_nesting_and_certificates(acceptance):
    rng = np.random.default_rng(103)
    cfg = ConvexSolverConfig(gap_tol=1e-8)
    nest_fail = 0
    worst_resid = 0.0
    worst_gap = 0.0
    full_rank = 0
    for i in range(500):
        m = int(rng.integers(2, 16))
        n = int(rng.integers(2, 50))
        F = rng.uniform(-1, 1, (n, m))
        if i % 5 == 0 and m > 2:
            F[:, -1] = F[:, 0] - F[:, 1]  # rank-deficient dictionary
        f = rng.uniform(-1, 1, n)
        D = DesignMatrix(F)
        ms, c, lin = ms_oracle(D, f), convex_oracle(D, f, cfg), linear_oracle(D, f)
        if not (ms.risk >= c.risk - cfg.gap_tol and c.risk - cfg.gap_tol >= lin.risk - 1e-8):
            nest_fail += 1
        if np.linalg.matrix_rank(F) == m:
            full_rank += 1
            worst_resid = max(worst_resid, lin.certificate)
        worst_gap = max(worst_gap, c.certificate)
    passed = nest_fail == 0 and worst_resid <= 1e-8 and worst_gap <= 1e-6
    acceptance(3, "oracle nesting and certificates", passed,
               f"nesting failures {nest_fail}/500, normal-equation residual {worst_resid:.2e} "
               f"on {full_rank} full-rank, duality gap {worst_gap:.2e}")


def test_maurey_inequality(acceptance):
    rng = np.random.default_rng(104)
    cfg = ConvexSolverConfig(gap_tol=1e-10)
    start = time.perf_counter()
    ok = 0
    worst = -math.inf
    for _ in range(1000):
        m_dict = int(rng.integers(2, 7))
        n = int(rng.integers(2, 40))
        m = int(rng.integers(1, 6))
        bound = float(rng.uniform(0.5, 2.0))
        D = DesignMatrix(rng.uniform(-bound, bound, (n, m_dict)), bound_l=bound)
        f = rng.uniform(-bound, bound, n)
        slack = maurey_grid_oracle(D, f, m).risk - convex_oracle(D, f, cfg).risk - bound**2 / m
        worst = max(worst, slack)
        ok += slack <= 1e-6
    elapsed = time.perf_counter() - start
    acceptance(4, "grid approximation bound", ok == 1000 and elapsed < 60,
               f"{ok}/1000 trials within L^2/m, worst slack {worst:.3e}, {elapsed:.1f}s")


def test_chi2_tail_bound(acceptance):
    start = time.perf_counter()
    res = check_chi2(draws=1_000_000, seed=105)
    elapsed = time.perf_counter() - start
    # the exact tail is also below the bound on the same grid
    exact_ok = all(stats.chi2.sf(d + x * math.sqrt(2 * d), d) <= math.exp(-x**2 / (2 * (1 + x * math.sqrt(2 / d))))
                   for d, x in itertools.product((1, 5, 20, 100), (0.5, 1.0, 2.0, 4.0)))
    acceptance(5, "chi-square tail bound", res.passed and exact_ok and elapsed < 60,
               f"16 (d, x) pairs, 1e6 draws each, {res.detail}, {elapsed:.1f}s")


def test_event_a_bound(acceptance):
    cfg = ExperimentConfig(n_grid=(100,), m_dict=10, sigma=1.0, seed=106)
    rep = event_a_diagnostic(cfg, 100_000)
    bound = event_a_bound(100, 10)
    passed = abs(bound - 1.859e-4) < 1e-7 and rep.ok
    acceptance(6, "noise correlation event bound", passed,
               f"frequency {rep.frequency:.2e} ({rep.failures}/{rep.reps}) vs {bound:.4e} + {rep.mc_margin:.2e}")


def test_ms_rate_scaling(acceptance):
    start = time.perf_counter()
    cfg = ExperimentConfig(n_grid=(100, 200, 400, 800, 1600), m_dict=20, truth_kind="in-dictionary",
                           truth_index=3, sigma=1.0, penalty=PenaltySpec(HARD, sigma=1.0), reps=200, seed=107)
    res = run_experiment(cfg)
    fit = slope_from_result(res, "MS")
    elapsed = time.perf_counter() - start
    modes = {r.mode for r in res.records}
    passed = abs(fit.slope + 1) <= 0.25 and not res.partial and elapsed < 300 and "greedy-forward" not in modes
    acceptance(7, "single-element rate scaling", passed,
               f"slope {fit.slope:.3f} +/- {fit.halfwidth:.3f}, modes {sorted(modes)}, {elapsed:.1f}s")


def test_convex_regime_scaling(acceptance):
    start = time.perf_counter()
    ratios = []
    for n in (100, 200, 400, 800, 1600):
        m = 4 * math.ceil(math.sqrt(n))
        cfg = ExperimentConfig(n_grid=(n,), m_dict=m, truth_kind="convex-combo", truth_weights="uniform",
                               sigma=1.0, reps=100, seed=108)
        row = run_experiment(cfg).summary_for("C")[0]
        assert m > math.sqrt(n)
        ratios.append(row["mean_excess"] / math.sqrt(math.log(1 + m / math.sqrt(n)) / n))
    elapsed = time.perf_counter() - start
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    acceptance(8, "convex-regime rate scaling", spread <= 3 and elapsed < 600,
               f"ratios {', '.join(f'{r:.3f}' for r in ratios)}, spread {spread:.3f}, {elapsed:.1f}s")


def _code_ints(code):
    return code.words.astype(np.int64) @ (1 << np.arange(code.length - 1, -1, -1, dtype=np.int64))


def _check_code(length):
    """Independent exhaustive distance check through a membership table."""
    code = vg_code(length)
    d = math.ceil(length / 8)
    ints = _code_ints(code)
    table = np.zeros(2**length, bool)
    table[ints] = True
    masks = [sum(1 << b for b in bits) for r in range(1, d) for bits in itertools.combinations(range(length), r)]
    min_ok = all(not table[ints ^ mask].any() for mask in masks)
    # farthest pair: M - (distance from a complement to the code)
    comp = ints ^ (2**length - 1)
    far = length if table[comp].any() else length - 1
    if far == length - 1:
        assert any(table[comp ^ (1 << b)].any() for b in range(length))
    return (min_ok and code.min_distance >= d and code.max_distance == far
            and code.card >= 2 ** (length / 8) and np.unique(ints).size == code.card), code


def test_hardness_constructions(acceptance):
    details = []
    ok = True
    for n, m, sigma in ((16, 4, 1.0), (64, 16, 0.5), (8, 2, 1.0), (300, 50, 2.0)):
        inst = make_ms_hard(n, m, sigma)
        b = max(math.floor(math.log(m)), 1)
        target = 2 * inst.gamma**2 * b / n
        truths = inst.truth_set
        seps = [empirical_norm_sq(a - c) for a, c in itertools.combinations(truths, 2)]
        kls = [kl_gaussian_fixed_design(a, c, n, sigma) for a, c in itertools.combinations(truths, 2)]
        ok &= max(abs(s - target) for s in seps) <= 1e-15 and max(kls) <= math.log(m) / 16 + 1e-12
    details.append("MS-hard separations and divergences ok" if ok else "MS-hard failed")
    for m in (8, 16, 24):
        code_ok, code = _check_code(m)
        ok &= code_ok
        inst = make_l_hard(max(m, 32), m, 1.0)
        kl_max = inst.design.n / 2 * inst.gamma**2 * code.max_distance / inst.design.n
        ok &= kl_max <= math.log(code.card) / 16 + 1e-12
        if code.card <= 256:
            truths = inst.truth_set
            ok &= max(kl_gaussian_fixed_design(a, c, inst.design.n, 1.0)
                      for a, c in itertools.combinations(truths, 2)) <= inst.kl_budget + 1e-12
        details.append(f"M={m}: card {code.card}, d {code.min_distance}..{code.max_distance}")
    acceptance(9, "hardness constructions", ok, "; ".join(details))


def test_simulate_determinism(acceptance, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"n_grid": [50, 100], "m_dict": 12, "truth_kind": "outside-span",
                                  "truth_function": "abs", "sigma": 0.5, "reps": 16, "seed": 110}))
    outputs = []
    for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
        out = tmp_path / tag
        proc = subprocess.run([sys.executable, "-m", "plsagg", "simulate", "--config", str(config),
                               "--out", str(out), "--threads", str(threads)], capture_output=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append(((out / "summary.csv").read_bytes(), (out / "replications.csv").read_bytes()))
    passed = outputs[0] == outputs[1] == outputs[2]
    acceptance(10, "simulate determinism", passed,
               "serial x2 and 8-way parallel CSVs " + ("byte-identical" if passed else "differ"))
