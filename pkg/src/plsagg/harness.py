"""Monte Carlo experiments for aggregation estimators.

Randomness is derived from ``numpy.random.SeedSequence`` keyed by
``(seed, n, rep, stream)``, so every replication can be regenerated on
its own and results do not depend on execution order or on the number
of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .aggregators import HARD, PenaltySpec, fit
from .core import DesignMatrix, InvalidInputError, TargetVector, empirical_norm_sq
from .oracles import ConvexSolverConfig, convex_oracle, linear_oracle, ms_oracle

DICTIONARY_KINDS = ("orthonormal-cosine", "indicator-blocks", "point-mass", "random-bounded", "user-csv")
TRUTH_KINDS = ("in-dictionary", "convex-combo", "linear-combo", "outside-span")
DESIGNS = ("fixed-grid", "random-uniform")
OUTSIDE_FUNCTIONS = {
    "sin": lambda x: np.sin(2 * np.pi * x),
    "step": lambda x: np.where(x < 0.5, -1.0, 1.0),
    "abs": lambda x: 2 * np.abs(x - 0.5),
}

# SeedSequence stream tags
_DESIGN, _NOISE, _HOLDOUT, _DICT, _EVENT_A = 0, 1, 2, 3, 4


def psi_rate(n: int, m_dict: int, kind: str, variant: str = "base") -> float:
    """Aggregation rate for ``kind`` in {MS, C, L} and ``variant`` in {base, tilde, bar}.

    ``base`` is the optimal rate; ``tilde`` matches the random-design
    hard-threshold bounds and ``bar`` the weighted-L1 bounds.  The C
    rate uses the ``M <= sqrt(n)`` branch at equality.
    """
    if n < 1 or m_dict < 2:
        raise InvalidInputError("psi_rate needs n >= 1 and M >= 2")
    small = m_dict * m_dict <= n
    mn = max(m_dict, n)
    if variant == "base":
        if kind == "MS":
            return math.log(m_dict) / n
        if kind == "L":
            return m_dict / n
        if kind == "C":
            return m_dict / n if small else math.sqrt(math.log1p(m_dict / math.sqrt(n)) / n)
    elif variant in ("tilde", "bar"):
        if kind == "MS":
            return math.log(mn) / n
        if kind == "L":
            return m_dict * math.log(mn) / n
        if kind == "C":
            if small:
                return m_dict * math.log(n) / n
            if variant == "tilde":
                return math.sqrt(math.log1p(mn / math.sqrt(n)) / n)
            return math.sqrt(math.log(m_dict) / n)
    else:
        raise InvalidInputError(f"unknown rate variant {variant!r}")
    raise InvalidInputError(f"unknown aggregation kind {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    n_grid: tuple[int, ...] = (100,)
    m_dict: int = 10
    dictionary_kind: str = "orthonormal-cosine"
    truth_kind: str = "in-dictionary"
    truth_index: int = 0
    truth_weights: tuple[float, ...] | str | None = None
    truth_function: str = "sin"
    truth_amplitude: float = 1.0
    sigma: float = 1.0
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    reps: int = 100
    seed: int = 0
    design: str = "fixed-grid"
    holdout_size: int = 100_000
    csv_path: str | None = None
    gap_tol: float = 1e-8
    pinv_tol: float = 1e-10
    subset_budget: int = 10**6

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if isinstance(self.truth_weights, (list, tuple)):
            object.__setattr__(self, "truth_weights", tuple(float(w) for w in self.truth_weights))
        if isinstance(self.penalty, dict):
            object.__setattr__(self, "penalty", PenaltySpec.from_dict(self.penalty))
        self.validate()

    def validate(self) -> None:
        if not self.n_grid or min(self.n_grid) < 1:
            raise InvalidInputError("n_grid must list positive sample sizes")
        if self.reps < 1:
            raise InvalidInputError("reps must be >= 1")
        if self.m_dict < 2:
            raise InvalidInputError("M must be >= 2")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")
        if self.dictionary_kind not in DICTIONARY_KINDS:
            raise InvalidInputError(f"unknown dictionary_kind {self.dictionary_kind!r}")
        if self.truth_kind not in TRUTH_KINDS:
            raise InvalidInputError(f"unknown truth_kind {self.truth_kind!r}")
        if self.design not in DESIGNS:
            raise InvalidInputError(f"unknown design {self.design!r}")
        if self.truth_kind == "in-dictionary" and not 0 <= self.truth_index < self.m_dict:
            raise InvalidInputError(f"truth index {self.truth_index} not in [0, {self.m_dict})")
        if self.truth_kind in ("convex-combo", "linear-combo"):
            w = self.truth_weights
            if w is None:
                raise InvalidInputError(f"{self.truth_kind} needs truth_weights")
            if isinstance(w, str):
                if w != "uniform":
                    raise InvalidInputError(f"unknown weight rule {w!r}")
            else:
                if len(w) != self.m_dict:
                    raise InvalidInputError(
                        f"truth weights reference {len(w)} functions but M = {self.m_dict}"
                    )
                if not all(math.isfinite(v) for v in w):
                    raise InvalidInputError("truth weights must be finite")
                if self.truth_kind == "convex-combo" and (min(w) < 0 or sum(w) > 1 + 1e-12):
                    raise InvalidInputError("convex-combo weights must be >= 0 and sum to <= 1")
        if self.truth_kind == "outside-span" and self.truth_function not in OUTSIDE_FUNCTIONS:
            raise InvalidInputError(f"unknown truth_function {self.truth_function!r}")
        if self.dictionary_kind == "user-csv":
            if self.csv_path is None:
                raise InvalidInputError("user-csv dictionary needs csv_path")
            if self.design != "fixed-grid" or self.truth_kind == "outside-span":
                raise InvalidInputError("user-csv dictionaries support fixed design and in-span truths only")
        if self.dictionary_kind == "point-mass" and self.design != "fixed-grid":
            raise InvalidInputError("point-mass dictionary requires the fixed-grid design")
        if self.holdout_size < 1:
            raise InvalidInputError("holdout_size must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        if isinstance(self.truth_weights, tuple):
            d["truth_weights"] = list(self.truth_weights)
        d["penalty"] = self.penalty.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInputError(f"unknown experiment fields: {sorted(unknown)}")
        d = dict(d)
        pen = d.get("penalty", {})
        if isinstance(pen, dict):
            # The penalty's noise level (and hence the default K1) follows the experiment's.
            if "sigma" not in pen and d.get("sigma", 0) > 0:
                pen = {**pen, "sigma": d["sigma"]}
            d["penalty"] = PenaltySpec.from_dict(pen)
        return cls(**d)


@dataclass(frozen=True)
class ReplicationRecord:
    n: int
    rep_index: int
    aggregate_risk: float
    risk_ms: float
    risk_c: float
    risk_l: float
    excess_ms: float
    excess_c: float
    excess_l: float
    mode: str
    iters: int
    converged: bool
    error: str = ""

    @property
    def oracle_risks(self) -> tuple[float, float, float]:
        return (self.risk_ms, self.risk_c, self.risk_l)


# -- data generation ----------------------------------------------------------


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _raw_dictionary(cfg: ExperimentConfig, x: NDArray) -> NDArray:
    m = cfg.m_dict
    kind = cfg.dictionary_kind
    if kind == "orthonormal-cosine":
        j = np.arange(m)
        out = np.sqrt(2.0) * np.cos(np.pi * x[:, None] * j[None, :])
        out[:, 0] = 1.0
        return out
    if kind == "indicator-blocks":
        cell = np.minimum((x * m).astype(int), m - 1)
        return (cell[:, None] == np.arange(m)[None, :]).astype(float)
    if kind == "random-bounded":
        k = np.arange(1, 9)
        a = _rng(cfg.seed, _DICT).uniform(-1.0, 1.0, size=(m, k.size))
        a /= np.abs(a).sum(axis=1, keepdims=True)
        return np.cos(np.pi * x[:, None] * k[None, :]) @ a.T
    raise InvalidInputError(f"dictionary kind {kind!r} is not a function of x")


def _orthonormalize(raw: NDArray) -> NDArray:
    """Linear map T with ``raw @ T`` orthonormal in the empirical norm."""
    n = raw.shape[0]
    if raw.shape[1] > n:
        raise InvalidInputError("empirical orthonormalization needs M <= n")
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    r = signs[:, None] * r
    return math.sqrt(n) * np.linalg.inv(r)


def _truth_weights(cfg: ExperimentConfig) -> NDArray | None:
    m = cfg.m_dict
    if cfg.truth_kind == "in-dictionary":
        w = np.zeros(m)
        w[cfg.truth_index] = 1.0
        return w
    if cfg.truth_kind in ("convex-combo", "linear-combo"):
        if cfg.truth_weights == "uniform":
            return np.full(m, 1.0 / m)
        return np.asarray(cfg.truth_weights, dtype=float)
    return None


@dataclass(frozen=True)
class _Problem:
    design: DesignMatrix
    f_vals: NDArray
    holdout_F: NDArray | None = None
    holdout_f: NDArray | None = None


def _design_points(cfg: ExperimentConfig, n: int, rep: int) -> NDArray:
    if cfg.design == "fixed-grid":
        return (np.arange(n) + 0.5) / n
    return _rng(cfg.seed, n, rep, _DESIGN).uniform(0.0, 1.0, size=n)


def _problem(cfg: ExperimentConfig, n: int, rep: int) -> _Problem:
    w = _truth_weights(cfg)
    if cfg.dictionary_kind == "user-csv":
        F = DesignMatrix.from_csv(cfg.csv_path).values
        if F.shape[1] != cfg.m_dict:
            raise InvalidInputError(f"CSV dictionary has {F.shape[1]} columns, config says M = {cfg.m_dict}")
        if F.shape[0] != n:
            raise InvalidInputError(f"CSV dictionary has {F.shape[0]} rows, n = {n}")
        f = F @ w
        return _Problem(DesignMatrix(F, bound_l=max(np.abs(F).max(), np.abs(f).max(), 1e-300)), f)
    if cfg.dictionary_kind == "point-mass":
        if cfg.m_dict > n:
            raise InvalidInputError("point-mass dictionary needs M <= n")
        F = np.zeros((n, cfg.m_dict))
        F[np.arange(cfg.m_dict), np.arange(cfg.m_dict)] = 1.0
        x = _design_points(cfg, n, rep)
        f = F @ w if w is not None else cfg.truth_amplitude * OUTSIDE_FUNCTIONS[cfg.truth_function](x)
        return _Problem(DesignMatrix(F, bound_l=max(1.0, np.abs(f).max())), f)

    x = _design_points(cfg, n, rep)
    F = _raw_dictionary(cfg, x)
    transform = None
    if cfg.dictionary_kind == "orthonormal-cosine" and cfg.design == "fixed-grid":
        transform = _orthonormalize(F)
        F = F @ transform

    def truth(xs, Fx):
        if w is not None:
            return Fx @ w
        return cfg.truth_amplitude * OUTSIDE_FUNCTIONS[cfg.truth_function](xs)

    f = truth(x, F)
    hF = hf = None
    if cfg.design == "random-uniform":
        hx = _rng(cfg.seed, _HOLDOUT).uniform(0.0, 1.0, size=cfg.holdout_size)
        hF = _raw_dictionary(cfg, hx)
        hf = truth(hx, hF)
    bound = max(float(np.abs(F).max()), float(np.abs(f).max()))
    if hF is not None:
        bound = max(bound, float(np.abs(hF).max()), float(np.abs(hf).max()))
    return _Problem(DesignMatrix(F, bound_l=bound), f, hF, hf)


def gen_data(cfg: ExperimentConfig, rep: int, n: int | None = None) -> tuple[DesignMatrix, TargetVector]:
    """Dictionary and observations for replication ``rep`` at sample size ``n``."""
    n = cfg.n_grid[0] if n is None else n
    prob = _problem(cfg, n, rep)
    noise = cfg.sigma * _rng(cfg.seed, n, rep, _NOISE).standard_normal(n)
    return prob.design, TargetVector(prob.f_vals, prob.f_vals + noise)


# -- experiment ---------------------------------------------------------------


def _oracle_risks(cfg: ExperimentConfig, prob: _Problem) -> tuple[float, float, float]:
    if prob.holdout_F is not None:
        design = DesignMatrix(prob.holdout_F, bound_l=max(np.abs(prob.holdout_F).max(), 1e-300))
        f = prob.holdout_f
    else:
        design, f = prob.design, prob.f_vals
    c_cfg = ConvexSolverConfig(gap_tol=cfg.gap_tol)
    return (
        ms_oracle(design, f).risk,
        convex_oracle(design, f, c_cfg).risk,
        linear_oracle(design, f, cfg.pinv_tol).risk,
    )


def _oracles_fixed(cfg: ExperimentConfig, n: int) -> tuple[float, float, float] | None:
    """Oracle risks that do not change across replications, else None."""
    if cfg.design == "random-uniform" and cfg.dictionary_kind not in (
            "orthonormal-cosine", "indicator-blocks", "random-bounded"):
        return None
    try:
        return _oracle_risks(cfg, _problem(cfg, n, 0))
    except Exception:
        return None  # each replication then reports its own failure


def _fit_kwargs(cfg: ExperimentConfig) -> dict:
    if cfg.penalty.kind == HARD:
        return {"budget": cfg.subset_budget}
    return {}


def run_replication(cfg: ExperimentConfig, n: int, rep: int,
                    oracle_risks: tuple[float, float, float] | None = None) -> ReplicationRecord:
    nan = float("nan")
    try:
        prob = _problem(cfg, n, rep)
        noise = cfg.sigma * _rng(cfg.seed, n, rep, _NOISE).standard_normal(n)
        y = prob.f_vals + noise
        res = fit(prob.design, y, cfg.penalty, **_fit_kwargs(cfg))
        lam = res.weights.coeffs
        if prob.holdout_F is not None:
            agg = empirical_norm_sq(prob.holdout_F @ lam - prob.holdout_f)
        else:
            agg = empirical_norm_sq(prob.design.values @ lam - prob.f_vals)
        if oracle_risks is None:
            oracle_risks = _oracle_risks(cfg, prob)
        r_ms, r_c, r_l = oracle_risks
        meta = res.solver_meta
        return ReplicationRecord(n, rep, agg, r_ms, r_c, r_l, agg - r_ms, agg - r_c, agg - r_l,
                                 meta["mode"], int(meta["iters"]), bool(meta["converged"]))
    except Exception as exc:  # recorded per replication, experiment continues
        return ReplicationRecord(n, rep, nan, nan, nan, nan, nan, nan, nan, "failed", 0, False,
                                 error=f"{type(exc).__name__}: {exc}")


def _run_job(args):
    cfg, n, reps, oracle_risks = args
    return [run_replication(cfg, n, r, oracle_risks) for r in reps]


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: list[ReplicationRecord]
    summary: list[dict]

    @property
    def partial(self) -> bool:
        return any(r.error for r in self.records)

    def summary_for(self, kind: str) -> list[dict]:
        return [row for row in self.summary if row["kind"] == kind]

    def records_csv(self) -> str:
        return _csv_text([f.name for f in fields(ReplicationRecord)],
                         [[getattr(r, f.name) for f in fields(ReplicationRecord)] for r in self.records])

    def summary_csv(self) -> str:
        cols = ["n", "M", "kind", "mean_excess", "mc_se", "psi_rate", "ratio"]
        return _csv_text(cols, [[row[c] for c in cols] for row in self.summary])

    def manifest(self) -> dict:
        return {"config": self.config.to_dict(), "partial": self.partial,
                "failed_reps": [[r.n, r.rep_index, r.error] for r in self.records if r.error]}

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "replications.csv").write_text(self.records_csv())
        (out / "summary.csv").write_text(self.summary_csv())
        (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def rate_variant(cfg: ExperimentConfig) -> str:
    if cfg.penalty.kind != HARD:
        return "bar"
    return "tilde" if cfg.design == "random-uniform" else "base"


def summarize(cfg: ExperimentConfig, records: Sequence[ReplicationRecord]) -> list[dict]:
    variant = rate_variant(cfg)
    rows = []
    for n in cfg.n_grid:
        recs = [r for r in records if r.n == n and not r.error]
        for kind, attr in (("MS", "excess_ms"), ("C", "excess_c"), ("L", "excess_l")):
            vals = np.array([getattr(r, attr) for r in recs])
            mean = float(np.mean(vals)) if vals.size else float("nan")
            se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
            rate = psi_rate(n, cfg.m_dict, kind, variant)
            rows.append({"n": n, "M": cfg.m_dict, "kind": kind, "mean_excess": mean,
                         "mc_se": se, "psi_rate": rate, "ratio": mean / rate})
    return rows


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run all replications over ``cfg.n_grid``; summaries reduce in (n, rep) order."""
    jobs = []
    for n in cfg.n_grid:
        fixed = _oracles_fixed(cfg, n)
        reps = list(range(cfg.reps))
        if threads <= 1:
            jobs.append((cfg, n, reps, fixed))
        else:
            size = max(1, math.ceil(len(reps) / threads))
            jobs.extend((cfg, n, reps[i:i + size], fixed) for i in range(0, len(reps), size))
    if threads <= 1:
        chunks = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_job, jobs))
    records = sorted((r for c in chunks for r in c), key=lambda r: (cfg.n_grid.index(r.n), r.rep_index))
    return ExperimentResult(cfg, records, summarize(cfg, records))


@dataclass(frozen=True)
class RateSlope:
    slope: float
    halfwidth: float
    used_n: tuple[int, ...]
    excluded_n: tuple[int, ...]


def rate_slope(ns: Sequence[float], means: Sequence[float], ses: Sequence[float] | None = None) -> RateSlope:
    """OLS slope of ``log(mean)`` on ``log(n)`` with a two-standard-error halfwidth.

    Points with nonpositive mean are excluded and reported.
    """
    ns = np.asarray(ns, dtype=float)
    means = np.asarray(means, dtype=float)
    ses = np.zeros_like(means) if ses is None else np.nan_to_num(np.asarray(ses, dtype=float))
    ok = means > 0
    if np.unique(ns[ok]).size < 3:
        raise InvalidInputError("rate slope needs at least 3 distinct n with positive mean excess")
    x, y = np.log(ns[ok]), np.log(means[ok])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    rel_se = ses[ok] / means[ok]
    halfwidth = 2.0 * math.sqrt(float(np.sum((xc / sxx) ** 2 * rel_se**2)))
    return RateSlope(slope, halfwidth, tuple(int(v) for v in ns[ok]), tuple(int(v) for v in ns[~ok]))


def slope_from_result(result: ExperimentResult, kind: str = "MS") -> RateSlope:
    rows = result.summary_for(kind)
    return rate_slope([r["n"] for r in rows], [r["mean_excess"] for r in rows], [r["mc_se"] for r in rows])


@dataclass(frozen=True)
class EventAReport:
    failures: int
    reps: int
    frequency: float
    bound: float
    mc_margin: float

    @property
    def ok(self) -> bool:
        return self.frequency <= self.bound + self.mc_margin


def event_a_bound(n: int, m_dict: int) -> float:
    return 1.0 / (m_dict * n * math.sqrt(math.pi * (2 * math.log(m_dict) + math.log(n))))


def event_a_diagnostic(cfg: ExperimentConfig, reps: int, n: int | None = None,
                       multiplier: float = 2.0 * math.sqrt(2.0), chunk: int = 10_000) -> EventAReport:
    """Frequency of ``max_j 2|V_j| / r_j > 1`` with ``V_j = <f_j, W>_n``.

    The noise is drawn by the harness so ``V_j`` is observable.  The
    returned bound is the union bound at the default multiplier.
    """
    n = cfg.n_grid[0] if n is None else n
    prob = _problem(cfg, n, 0)
    F = prob.design.values
    m = prob.design.m_dict
    norms = np.sqrt(np.mean(F**2, axis=0))
    r = multiplier * cfg.sigma * norms * math.sqrt((2 * math.log(m) + math.log(n)) / n)
    rng = _rng(cfg.seed, n, _EVENT_A)
    failures = 0
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        W = cfg.sigma * rng.standard_normal((k, n))
        V = W @ F / n
        failures += int(np.count_nonzero(np.any(2.0 * np.abs(V) > r, axis=1)))
        done += k
    bound = event_a_bound(n, m)
    margin = 3.0 * math.sqrt(bound * (1.0 - bound) / reps)
    return EventAReport(failures, reps, failures / reps, bound, margin)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
