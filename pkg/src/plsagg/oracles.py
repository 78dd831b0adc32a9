"""Model-selection, convex and linear oracles for a known target.

Each oracle minimizes ``||f_lambda - f||_n^2`` over its weight set:
the M vertices ``e_j`` (MS), the set ``{lambda >= 0, sum(lambda) <= 1}``
(C) or all of ``R^M`` (L).  The Maurey grid restricts the convex set to
coefficients ``k_j / m``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    BudgetExceededError,
    DesignMatrix,
    InvalidInputError,
    WeightVector,
    cross_moments,
    empirical_norm_sq,
    gram,
)

ORACLE_KINDS = ("MS", "C", "L", "MaureyGrid")
DEFAULT_GRID_BUDGET = 10**6


@dataclass(frozen=True)
class OracleResult:
    kind: str
    weights: WeightVector
    risk: float
    certificate: float = 0.0
    iters: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": [float(v) for v in self.weights.coeffs],
            "support": list(self.weights.support),
            "risk": float(self.risk),
            "certificate": float(self.certificate),
            "iters": int(self.iters),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class ConvexSolverConfig:
    max_iters: int = 100_000
    gap_tol: float = 1e-8

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise InvalidInputError("gap_tol must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be positive")


def _target(design: DesignMatrix, f_vals: ArrayLike) -> NDArray[np.float64]:
    f = np.asarray(f_vals, dtype=float)
    if f.ndim != 1 or f.size != design.n:
        raise InvalidInputError(f"target length {f.size} != n = {design.n}")
    return f


def risk_of(design: DesignMatrix, f: NDArray[np.float64], lam: NDArray[np.float64]) -> float:
    return empirical_norm_sq(design.values @ lam - f)


def ms_oracle(design: DesignMatrix, f_vals: ArrayLike) -> OracleResult:
    f = _target(design, f_vals)
    risks = np.mean((design.values - f[:, None]) ** 2, axis=0)
    j = int(np.argmin(risks))  # argmin returns the first minimizer
    return OracleResult("MS", WeightVector.vertex(design.m_dict, j), float(risks[j]))


def linear_oracle(design: DesignMatrix, f_vals: ArrayLike, tol: float = 1e-10) -> OracleResult:
    """Minimum-norm least-squares weights via a spectral pseudo-inverse of the Gram matrix."""
    f = _target(design, f_vals)
    g = gram(design)
    c = cross_moments(design, f)
    evals, evecs = np.linalg.eigh(g.psi)
    cutoff = tol * max(g.xi_max, 0.0)
    keep = evals > cutoff
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    lam = evecs @ (inv * (evecs.T @ c))
    residual = float(np.linalg.norm(g.psi @ lam - c))
    return OracleResult("L", WeightVector(lam), risk_of(design, f, lam), certificate=residual)


def convex_oracle(
    design: DesignMatrix, f_vals: ArrayLike, cfg: ConvexSolverConfig | None = None
) -> OracleResult:
    """Away-step Frank-Wolfe over ``conv{0, e_1, ..., e_M}`` with exact line search.

    The polytope is a simplex with M + 1 vertices, so the barycentric
    weights are ``lambda_j`` and ``1 - sum(lambda)`` for the origin.
    The returned certificate is the final Frank-Wolfe duality gap, an
    upper bound on ``risk - min risk``.
    """
    cfg = cfg or ConvexSolverConfig()
    f = _target(design, f_vals)
    psi = gram(design).psi
    c = cross_moments(design, f)
    m = design.m_dict

    # Start at the best vertex (origin included).
    diag = np.diag(psi)
    vertex_vals = diag - 2 * c
    j0 = int(np.argmin(vertex_vals))
    lam = np.zeros(m)
    if vertex_vals[j0] < 0:
        lam[j0] = 1.0

    gap = math.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * (psi @ lam - c)
        j_fw = int(np.argmin(grad))
        fw_val = min(grad[j_fw], 0.0)  # the origin has linear value 0
        gap = float(grad @ lam - fw_val)
        if gap <= cfg.gap_tol:
            break
        if grad[j_fw] < 0:
            d_fw = -lam.copy()
            d_fw[j_fw] += 1.0
        else:
            d_fw = -lam

        # Away vertex: active vertex with the largest linear value.
        alpha0 = 1.0 - lam.sum()
        active = lam > 0
        away_j, away_val = -1, -math.inf
        if np.any(active):
            idx = np.flatnonzero(active)
            k = int(idx[np.argmax(grad[idx])])
            away_j, away_val = k, float(grad[k])
        if alpha0 > 1e-15 and 0.0 > away_val:
            away_j, away_val = -1, 0.0
        away_gap = away_val - float(grad @ lam)

        if gap >= away_gap:
            d, step_max = d_fw, 1.0
        else:
            if away_j >= 0:
                alpha = lam[away_j]
                d = lam.copy()
                d[away_j] -= 1.0
            else:
                alpha = alpha0
                d = lam.copy()
            step_max = alpha / (1.0 - alpha) if alpha < 1.0 else math.inf

        curv = float(d @ psi @ d)
        slope = float(grad @ d)
        if curv <= 0:
            step = step_max
        else:
            step = min(-slope / (2.0 * curv), step_max)
        if not math.isfinite(step) or step <= 0:
            break
        lam = lam + step * d
        lam[lam < 1e-15] = 0.0
    lam = _simplex_clean(lam)
    converged = gap <= cfg.gap_tol
    return OracleResult("C", WeightVector(lam), risk_of(design, f, lam),
                        certificate=float(gap), iters=it, converged=converged)


def _simplex_clean(lam: NDArray[np.float64]) -> NDArray[np.float64]:
    lam = np.clip(lam, 0.0, None)
    s = lam.sum()
    if s > 1.0:
        if s > 1.0 + 1e-9:
            raise ArithmeticError(f"Frank-Wolfe iterate left the simplex: sum = {s}")
        lam = lam / s
    return lam


def grid_count(m_dict: int, m: int) -> int:
    """Number of nonnegative integer vectors of length M summing to at most m."""
    return math.comb(m_dict + m, m)


def _compositions(m_dict: int, m: int):
    # Weak compositions of 0..m into m_dict parts, lexicographic in k.
    def rec(prefix, remaining, slots):
        if slots == 0:
            yield prefix
            return
        for k in range(remaining + 1):
            yield from rec(prefix + (k,), remaining - k, slots - 1)

    yield from rec((), m, m_dict)


def maurey_grid_oracle(
    design: DesignMatrix, f_vals: ArrayLike, m: int, budget: int = DEFAULT_GRID_BUDGET
) -> OracleResult:
    """Exhaustive search over weights ``k_j / m`` with ``k_j >= 0``, ``sum k_j <= m``."""
    if m < 1:
        raise InvalidInputError("grid resolution m must be a positive integer")
    f = _target(design, f_vals)
    count = grid_count(design.m_dict, m)
    if count > budget:
        raise BudgetExceededError("Maurey grid enumeration count", count, budget)
    ks = np.array(list(_compositions(design.m_dict, m)), dtype=float)
    lams = ks / m
    F = design.values
    best_j, best_risk = 0, math.inf
    chunk = 4096
    for start in range(0, len(lams), chunk):
        block = lams[start:start + chunk]
        risks = np.mean((block @ F.T - f) ** 2, axis=1)
        j = int(np.argmin(risks))
        if risks[j] < best_risk:
            best_j, best_risk = start + j, float(risks[j])
    lam = lams[best_j]
    return OracleResult("MaureyGrid", WeightVector(lam), risk_of(design, f, lam))


def x_n_m(n: int, m_dict: int) -> float:
    """Grid resolution ``sqrt(n log 2 / log(1 + M / sqrt(n)))`` used when ``M > sqrt(n)``."""
    if n < 1 or m_dict < 1:
        raise InvalidInputError("n and M must be positive")
    if m_dict * m_dict <= n:
        raise ValueError(f"x_n_m is only defined for M > sqrt(n); got M={m_dict}, n={n}")
    return math.sqrt(n * math.log(2) / math.log1p(m_dict / math.sqrt(n)))


def all_oracles(
    design: DesignMatrix, f_vals: ArrayLike, cfg: ConvexSolverConfig | None = None,
    tol: float = 1e-10,
) -> dict[str, OracleResult]:
    return {
        "MS": ms_oracle(design, f_vals),
        "C": convex_oracle(design, f_vals, cfg),
        "L": linear_oracle(design, f_vals, tol),
    }
