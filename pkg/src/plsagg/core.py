"""Dictionary evaluations, weight vectors and empirical-norm algebra.

Everything downstream works on an ``n x M`` matrix of dictionary
evaluations ``F[i, j] = f_j(X_i)``; functions never appear symbolically.
All risks are squared empirical norms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray


class InvalidInputError(ValueError):
    """Malformed or dimensionally inconsistent input."""


class PreconditionError(ValueError):
    """A mathematical precondition of an operation does not hold."""


class BudgetExceededError(RuntimeError):
    """An exhaustive enumeration would exceed its configured budget."""

    def __init__(self, message: str, count: int, budget: int):
        super().__init__(f"{message}: {count} > budget {budget}")
        self.count = count
        self.budget = budget


def _frozen(a: ArrayLike, ndim: int, name: str) -> NDArray[np.float64]:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DesignMatrix:
    """Evaluations of ``M`` dictionary functions at ``n`` design points.

    ``bound_l`` is the uniform bound L on the dictionary. When it is not
    supplied it is taken as ``max |entry|`` and ``bound_inferred`` is set.
    """

    values: NDArray[np.float64]
    bound_l: float | None = None
    bound_inferred: bool = field(default=False)

    def __post_init__(self):
        vals = _frozen(self.values, 2, "values")
        object.__setattr__(self, "values", vals)
        n, m = vals.shape
        if n < 1:
            raise InvalidInputError("need at least one design point")
        if m < 2:
            raise InvalidInputError(f"dictionary needs M >= 2 functions, got {m}")
        if self.bound_l is None:
            object.__setattr__(self, "bound_l", float(np.max(np.abs(vals))) if vals.size else 0.0)
            object.__setattr__(self, "bound_inferred", True)
        else:
            bound = float(self.bound_l)
            if not bound > 0:
                raise InvalidInputError("bound_l must be positive")
            if np.max(np.abs(vals)) > bound * (1 + 1e-12):
                raise InvalidInputError(
                    f"dictionary entry exceeds declared bound L={bound}: {np.max(np.abs(vals))}"
                )
            object.__setattr__(self, "bound_l", bound)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m_dict(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"j{j}" for j in range(self.m_dict)])
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, bound_l: float | None = None) -> "DesignMatrix":
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise InvalidInputError(f"cannot read design CSV {path}: {exc}") from exc
        if len(rows) < 2:
            raise InvalidInputError(f"design CSV {path} has no data rows")
        header = rows[0]
        if header != [f"j{j}" for j in range(len(header))]:
            raise InvalidInputError(f"design CSV header must be j0..j{{M-1}}, got {header[:4]}...")
        try:
            vals = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise InvalidInputError(f"non-numeric entry in {path}: {exc}") from exc
        if vals.ndim != 2 or vals.shape[1] != len(header):
            raise InvalidInputError(f"ragged rows in design CSV {path}")
        return cls(vals, bound_l)


@dataclass(frozen=True)
class TargetVector:
    """Truth ``f(X_i)`` and observations ``Y_i = f(X_i) + W_i``."""

    f_vals: NDArray[np.float64]
    y_vals: NDArray[np.float64]

    def __post_init__(self):
        f = _frozen(self.f_vals, 1, "f_vals")
        y = _frozen(self.y_vals, 1, "y_vals")
        if f.shape != y.shape:
            raise InvalidInputError(f"f_vals and y_vals lengths differ: {f.size} vs {y.size}")
        object.__setattr__(self, "f_vals", f)
        object.__setattr__(self, "y_vals", y)

    @property
    def n(self) -> int:
        return self.f_vals.size

    @property
    def noise(self) -> NDArray[np.float64]:
        return self.y_vals - self.f_vals

    def check_against(self, design: DesignMatrix) -> None:
        if self.n != design.n:
            raise InvalidInputError(f"target length {self.n} != design n {design.n}")
        if np.max(np.abs(self.f_vals)) > design.bound_l * (1 + 1e-12):
            raise InvalidInputError("|f(X_i)| exceeds the dictionary bound L")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["f", "y"])
            for f, y in zip(self.f_vals, self.y_vals):
                w.writerow([repr(float(f)), repr(float(y))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TargetVector":
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise InvalidInputError(f"cannot read target CSV {path}: {exc}") from exc
        if not rows or rows[0] != ["f", "y"]:
            raise InvalidInputError(f"target CSV {path} must start with header f,y")
        try:
            vals = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise InvalidInputError(f"non-numeric entry in {path}: {exc}") from exc
        if vals.ndim != 2 or vals.shape[0] == 0 or vals.shape[1] != 2:
            raise InvalidInputError(f"target CSV {path} must have two columns and >= 1 row")
        return cls(vals[:, 0], vals[:, 1])


@dataclass(frozen=True)
class WeightVector:
    """Aggregation coefficients with their support and sparsity."""

    coeffs: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, 1, "coeffs"))

    @classmethod
    def zeros(cls, m: int) -> "WeightVector":
        return cls(np.zeros(m))

    @classmethod
    def vertex(cls, m: int, j: int) -> "WeightVector":
        c = np.zeros(m)
        c[j] = 1.0
        return cls(c)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.coeffs))

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.coeffs))

    def __len__(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class GramInfo:
    psi: NDArray[np.float64]
    xi_min: float
    xi_max: float
    tol_eig: float


def _as_vector(vals: ArrayLike, name: str = "vector") -> NDArray[np.float64]:
    v = np.asarray(vals, dtype=float)
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    return v


def _coeffs(w: WeightVector | ArrayLike) -> NDArray[np.float64]:
    return w.coeffs if isinstance(w, WeightVector) else _as_vector(w, "weights")


def empirical_norm_sq(vals: ArrayLike) -> float:
    """Return ``(1/n) * sum(vals**2)``."""
    v = _as_vector(vals)
    if v.size == 0:
        raise InvalidInputError("empirical norm of an empty vector")
    return float(np.dot(v, v) / v.size)


def empirical_inner(a: ArrayLike, b: ArrayLike) -> float:
    a, b = _as_vector(a), _as_vector(b)
    if a.size != b.size or a.size == 0:
        raise InvalidInputError("empirical inner product needs equal nonzero lengths")
    return float(np.dot(a, b) / a.size)


def combine(design: DesignMatrix, w: WeightVector | ArrayLike) -> NDArray[np.float64]:
    """Evaluate the linear combination ``sum_j w_j f_j`` at the design points."""
    lam = _coeffs(w)
    if lam.size != design.m_dict:
        raise InvalidInputError(f"weight length {lam.size} != M = {design.m_dict}")
    return design.values @ lam


def rss(design: DesignMatrix, y: ArrayLike, w: WeightVector | ArrayLike) -> float:
    """Residual mean square ``(1/n) * sum (y_i - f_w(X_i))**2``."""
    y = _as_vector(y, "y")
    if y.size != design.n:
        raise InvalidInputError(f"y length {y.size} != n = {design.n}")
    return empirical_norm_sq(y - combine(design, w))


def gram(design: DesignMatrix, tol_eig: float = 1e-10) -> GramInfo:
    """Empirical Gram matrix and its extreme eigenvalues.

    Rank-deficient designs are reported through ``xi_min`` (which may be
    zero or slightly negative from rounding), never rejected.
    """
    F = design.values
    psi = F.T @ F / design.n
    psi = 0.5 * (psi + psi.T)
    psi.setflags(write=False)
    eig = np.linalg.eigvalsh(psi)
    xi_min, xi_max = float(eig[0]), float(eig[-1])
    # Snap round-off-level eigenvalues so singular designs report xi_min = 0.
    scale = max(abs(xi_max), 1.0)
    if abs(xi_min) <= tol_eig * scale:
        xi_min = 0.0
    return GramInfo(psi=psi, xi_min=xi_min, xi_max=xi_max, tol_eig=tol_eig)


def cross_moments(design: DesignMatrix, y: ArrayLike) -> NDArray[np.float64]:
    """Vector ``c_j = <y, f_j>_n``."""
    y = _as_vector(y, "y")
    if y.size != design.n:
        raise InvalidInputError(f"vector length {y.size} != n = {design.n}")
    return design.values.T @ y / design.n


def is_orthonormal(design: DesignMatrix, atol: float = 1e-10) -> bool:
    psi = design.values.T @ design.values / design.n
    return bool(np.allclose(psi, np.eye(design.m_dict), rtol=0.0, atol=atol))
