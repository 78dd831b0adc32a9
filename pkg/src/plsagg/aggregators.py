"""Penalized least-squares aggregation with hard-threshold and weighted L1 penalties.

The hard-threshold estimator is a best-subset search: for each support
size the residual-minimizing support is found (exhaustively, by a
closed form on orthonormal dictionaries, or greedily as a flagged
fallback) and the penalized objective is minimized over sizes.

The L1 estimator uses the data-dependent weights
``r_j = c * sigma * ||f_j||_n * sqrt((2 log M + log n) / n)`` with
``c = 2 sqrt(2)`` by default, solved by cyclic coordinate descent or,
on an L2 ball, by projected proximal gradient.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (
    BudgetExceededError,
    DesignMatrix,
    InvalidInputError,
    PreconditionError,
    WeightVector,
    cross_moments,
    empirical_norm_sq,
    gram,
    is_orthonormal,
    rss,
)

HARD = "HardThreshold"
SOFT = "SoftThresholdL1"
DEFAULT_SUBSET_BUDGET = 10**6
L1_MULTIPLIER = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = HARD
    k1: float | None = None
    use_max_mn: bool = False
    sigma: float = 1.0
    t_radius: float | None = None
    l1_multiplier: float = L1_MULTIPLIER

    def __post_init__(self):
        if self.kind not in (HARD, SOFT):
            raise InvalidInputError(f"unknown penalty kind {self.kind!r}")
        if self.k1 is None and self.kind == HARD:
            # Default K1 = 2 sigma^2.
            object.__setattr__(self, "k1", 2.0 * self.sigma**2)
        if self.kind == HARD and not (self.k1 is not None and self.k1 > 0):
            raise InvalidInputError("hard-threshold penalty needs k1 > 0")
        if self.kind == SOFT and not self.sigma > 0:
            raise InvalidInputError("L1 penalty needs sigma > 0")
        if self.t_radius is not None and self.t_radius < 0:
            raise InvalidInputError("t_radius must be nonnegative")
        if not self.l1_multiplier > 0:
            raise InvalidInputError("l1_multiplier must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PenaltySpec":
        known = {k: d[k] for k in ("kind", "k1", "use_max_mn", "sigma", "t_radius", "l1_multiplier") if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise InvalidInputError(f"unknown penalty fields: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class FitResult:
    weights: WeightVector
    objective: float
    rss: float
    penalty: float
    solver_meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "weights": [float(v) for v in self.weights.coeffs],
            "support": list(self.weights.support),
            "rss": float(self.rss),
            "penalty": float(self.penalty),
            "objective": float(self.objective),
            "solver_meta": self.solver_meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def penalty_hard(sparsity: int, m_dict: int, n: int, k1: float, use_max_mn: bool = False) -> float:
    """``k1 * (s/n) * log(1 + D / max(s, 1))`` with ``D = M`` or ``max(M, n)``."""
    if sparsity < 0 or sparsity > m_dict:
        raise InvalidInputError(f"sparsity {sparsity} outside [0, {m_dict}]")
    if sparsity == 0:
        return 0.0
    d = max(m_dict, n) if use_max_mn else m_dict
    return k1 * sparsity / n * math.log1p(d / max(sparsity, 1))


def l1_weights(design: DesignMatrix, sigma: float, multiplier: float = L1_MULTIPLIER) -> NDArray[np.float64]:
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    n, m = design.n, design.m_dict
    norms = np.sqrt(np.mean(design.values**2, axis=0))
    return multiplier * sigma * norms * math.sqrt((2 * math.log(m) + math.log(n)) / n)


def soft_threshold_scalar(z: float, r: float) -> float:
    if r < 0:
        raise InvalidInputError("threshold must be nonnegative")
    return math.copysign(abs(z) - r, z) if abs(z) > r else 0.0


def soft_threshold(z: ArrayLike, r: ArrayLike) -> NDArray[np.float64]:
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - r, 0.0)


def penalty_value(design: DesignMatrix, w: WeightVector | ArrayLike, spec: PenaltySpec) -> float:
    lam = w.coeffs if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if spec.kind == HARD:
        return penalty_hard(int(np.count_nonzero(lam)), design.m_dict, design.n, spec.k1, spec.use_max_mn)
    r = l1_weights(design, spec.sigma, spec.l1_multiplier)
    return float(np.sum(r * np.abs(lam)))


def penalized_objective(design: DesignMatrix, y: ArrayLike, w: WeightVector | ArrayLike, spec: PenaltySpec) -> float:
    return rss(design, y, w) + penalty_value(design, w, spec)


def _result(design, y, lam, spec, meta) -> FitResult:
    w = WeightVector(lam)
    s = rss(design, y, w)
    p = penalty_value(design, w, spec)
    return FitResult(w, s + p, s, p, meta)


def _check_y(design: DesignMatrix, y: ArrayLike) -> NDArray[np.float64]:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != design.n:
        raise InvalidInputError(f"y length {y.size} != n = {design.n}")
    return y


# -- hard threshold ---------------------------------------------------------


def _subset_lstsq(F: NDArray, y: NDArray, support: tuple[int, ...]) -> tuple[NDArray, float]:
    n = F.shape[0]
    lam = np.zeros(F.shape[1])
    if support:
        cols = list(support)
        coef, *_ = np.linalg.lstsq(F[:, cols], y, rcond=None)
        lam[cols] = coef
    resid = y - F @ lam
    return lam, float(resid @ resid / n)


def _best_supports_exhaustive(F, y, m_dict):
    best = []
    for size in range(m_dict + 1):
        top = None
        for support in itertools.combinations(range(m_dict), size):
            lam, s = _subset_lstsq(F, y, support)
            if top is None or s < top[2]:
                top = (support, lam, s)
        best.append(top)
    return best


def _best_supports_greedy(F, y, m_dict):
    best = [((), np.zeros(m_dict), float(y @ y / F.shape[0]))]
    current: tuple[int, ...] = ()
    for _ in range(m_dict):
        top = None
        for j in range(m_dict):
            if j in current:
                continue
            support = tuple(sorted(current + (j,)))
            lam, s = _subset_lstsq(F, y, support)
            if top is None or s < top[2]:
                top = (support, lam, s)
        current = top[0]
        best.append(top)
    return best


def _best_supports_orthonormal(F, y, m_dict):
    n = F.shape[0]
    z = F.T @ y / n
    order = np.argsort(-np.abs(z), kind="stable")
    best = []
    for size in range(m_dict + 1):
        support = tuple(sorted(int(j) for j in order[:size]))
        lam = np.zeros(m_dict)
        lam[list(support)] = z[list(support)]
        resid = y - F @ lam
        best.append((support, lam, float(resid @ resid / n)))
    return best


def fit_hard_threshold(
    design: DesignMatrix,
    y: ArrayLike,
    spec: PenaltySpec,
    budget: int = DEFAULT_SUBSET_BUDGET,
    method: str = "auto",
    allow_greedy: bool = True,
) -> FitResult:
    """Minimize ``rss(lambda) + penalty_hard(M(lambda))``.

    ``method`` is one of ``auto``, ``exhaustive``, ``orthonormal`` or
    ``greedy``.  ``auto`` uses the closed form when the dictionary is
    empirically orthonormal, exhaustive enumeration within ``budget``,
    and greedy forward selection otherwise (if ``allow_greedy``).
    """
    if spec.kind != HARD:
        raise InvalidInputError("fit_hard_threshold needs a HardThreshold penalty")
    y = _check_y(design, y)
    F, m, n = design.values, design.m_dict, design.n
    count = 2**m

    if method == "auto":
        if is_orthonormal(design):
            method = "orthonormal"
        elif count <= budget:
            method = "exhaustive"
        elif allow_greedy:
            method = "greedy"
        else:
            raise BudgetExceededError("best-subset enumeration count", count, budget)
    if method == "exhaustive":
        if count > budget:
            raise BudgetExceededError("best-subset enumeration count", count, budget)
        per_size, mode = _best_supports_exhaustive(F, y, m), "exact-exhaustive"
    elif method == "orthonormal":
        if not is_orthonormal(design):
            raise PreconditionError("orthonormal closed form needs an empirically orthonormal dictionary")
        per_size, mode = _best_supports_orthonormal(F, y, m), "exact-orthonormal"
    elif method == "greedy":
        per_size, mode = _best_supports_greedy(F, y, m), "greedy-forward"
    else:
        raise InvalidInputError(f"unknown method {method!r}")

    best = None
    for size, (support, lam, s) in enumerate(per_size):
        # A rank-deficient subset fit can zero some coefficients; charge the real sparsity.
        obj = s + penalty_hard(int(np.count_nonzero(lam)), m, n, spec.k1, spec.use_max_mn)
        if best is None or obj < best[0]:
            best = (obj, lam)
    lam = best[1]
    meta = {"mode": mode, "iters": len(per_size), "converged": True, "projected": False}
    if spec.t_radius is not None:
        l1 = float(np.sum(np.abs(lam)))
        if l1 > spec.t_radius:
            lam = lam * (spec.t_radius / l1) if l1 > 0 else lam
            meta["projected"] = True
    return _result(design, y, lam, spec, meta)


# -- weighted L1 -------------------------------------------------------------


def _l1_objective(psi, c, ynorm, r, lam) -> float:
    return float(lam @ psi @ lam - 2 * c @ lam + ynorm + r @ np.abs(lam))


def fit_soft_threshold(
    design: DesignMatrix,
    y: ArrayLike,
    spec: PenaltySpec,
    tol: float = 1e-10,
    max_iters: int = 100_000,
) -> FitResult:
    """Minimize ``rss(lambda) + sum_j r_j |lambda_j|``.

    Unconstrained problems use cyclic coordinate descent in ascending
    index order; with ``spec.t_radius`` set the minimization is over the
    L2 ball of that radius by projected proximal gradient.
    """
    if spec.kind != SOFT:
        raise InvalidInputError("fit_soft_threshold needs a SoftThresholdL1 penalty")
    y = _check_y(design, y)
    g = gram(design)
    psi, c = g.psi, cross_moments(design, y)
    ynorm = empirical_norm_sq(y)
    r = l1_weights(design, spec.sigma, spec.l1_multiplier)
    diag = np.diag(psi)
    active = diag > 0  # zero columns stay frozen at 0
    lam = np.zeros(design.m_dict)
    obj = _l1_objective(psi, c, ynorm, r, lam)
    slack = 1e-12 * max(1.0, abs(obj))
    converged = False
    it = 0

    if spec.t_radius is None:
        mode = "coordinate-descent"
        grad_part = psi @ lam  # Psi @ lam, kept in sync
        for it in range(1, max_iters + 1):
            max_change = 0.0
            for j in np.flatnonzero(active):
                old = lam[j]
                rho = c[j] - (grad_part[j] - diag[j] * old)
                new = soft_threshold_scalar(rho, r[j] / 2.0) / diag[j]
                if new != old:
                    grad_part += psi[:, j] * (new - old)
                    lam[j] = new
                    max_change = max(max_change, abs(new - old))
            new_obj = _l1_objective(psi, c, ynorm, r, lam)
            if new_obj > obj + slack:
                raise ArithmeticError(f"coordinate descent increased the objective: {obj} -> {new_obj}")
            obj = new_obj
            if max_change <= tol:
                converged = True
                break
    else:
        mode = "projected-proximal"
        if not g.xi_min > 0:
            raise PreconditionError(
                "L2-ball constrained L1 aggregation requires a positive definite Gram matrix "
                f"(smallest eigenvalue {g.xi_min})"
            )
        step = 1.0 / (2.0 * g.xi_max)
        radius = spec.t_radius
        for it in range(1, max_iters + 1):
            grad = 2.0 * (psi @ lam - c)
            new = soft_threshold(lam - step * grad, step * r)
            new[~active] = 0.0
            norm = float(np.linalg.norm(new))
            if norm > radius:
                new *= radius / norm
            change = float(np.max(np.abs(new - lam)))
            lam = new
            new_obj = _l1_objective(psi, c, ynorm, r, lam)
            if new_obj > obj + slack:
                raise ArithmeticError(f"proximal gradient increased the objective: {obj} -> {new_obj}")
            obj = new_obj
            if change <= tol:
                converged = True
                break

    meta = {"mode": mode, "iters": it, "converged": converged,
            "frozen": [int(j) for j in np.flatnonzero(~active)]}
    return _result(design, y, lam, spec, meta)


def fit(design: DesignMatrix, y: ArrayLike, spec: PenaltySpec, **kwargs) -> FitResult:
    if spec.kind == HARD:
        return fit_hard_threshold(design, y, spec, **kwargs)
    return fit_soft_threshold(design, y, spec, **kwargs)


def estimate_sigma(design: DesignMatrix, y: ArrayLike) -> float:
    """Plug-in noise level from full-model least-squares residuals (never used implicitly)."""
    y = _check_y(design, y)
    coef, _, rank, _ = np.linalg.lstsq(design.values, y, rcond=None)
    dof = design.n - rank
    if dof <= 0:
        raise PreconditionError("full-model residual variance needs n > rank")
    resid = y - design.values @ coef
    return math.sqrt(float(resid @ resid) / dof)


def l1_condition_report(design: DesignMatrix, t_radius: float) -> dict:
    """Check ``T^2 xi_min > 2 L^2`` and ``T <= log(max(M, n))^(1/4)`` without resolving them."""
    g = gram(design)
    L = design.bound_l
    return {
        "t_radius": t_radius,
        "xi_min": g.xi_min,
        "identifiability_ok": t_radius**2 * g.xi_min > 2 * L**2,
        "radius_cap": math.log(max(design.m_dict, design.n)) ** 0.25,
        "radius_cap_ok": t_radius <= math.log(max(design.m_dict, design.n)) ** 0.25,
    }
