"""Hard regression instances for aggregation lower bounds.

Two families are built on a fixed design:

* MS-hard: M functions ``gamma * 1{x in S_j}`` on disjoint blocks of
  ``max(floor(log M), 1)`` design points.  Any estimator must tell the M
  candidates apart.
* L-hard: point masses ``gamma * 1{x = X_j}`` and the truths are their
  {0,1}-combinations indexed by a well-separated binary code.

The amplitude ``gamma`` is calibrated so that every pairwise Kullback
divergence of the Gaussian observation laws is at most
``log(N) / 16`` with N the number of candidate truths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import DesignMatrix, InvalidInputError, PreconditionError, empirical_norm_sq

KL_FRACTION = 1.0 / 16.0


def chi2_tail_bound(d: int, x: float) -> float:
    """Upper bound on ``P{Z_d - d >= x sqrt(2d)}`` for a chi-square variable with d degrees of freedom."""
    if d < 1:
        raise InvalidInputError("degrees of freedom must be >= 1")
    if not x > 0:
        raise InvalidInputError("x must be positive")
    return math.exp(-(x**2) / (2.0 * (1.0 + x * math.sqrt(2.0 / d))))


def kl_gaussian_fixed_design(f_vals: ArrayLike, g_vals: ArrayLike, n: int | None = None, sigma: float = 1.0) -> float:
    """KL divergence between ``N(f, sigma^2 I_n)`` and ``N(g, sigma^2 I_n)``."""
    f = np.asarray(f_vals, dtype=float)
    g = np.asarray(g_vals, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise InvalidInputError("KL needs two vectors of equal length")
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    n = f.size if n is None else n
    if n != f.size:
        raise InvalidInputError(f"n = {n} does not match vector length {f.size}")
    return n / (2.0 * sigma**2) * empirical_norm_sq(f - g)


def block_size(m_dict: int) -> int:
    return max(int(math.floor(math.log(m_dict))), 1)


@dataclass(frozen=True)
class BinaryCode:
    length: int
    words: NDArray[np.uint8]  # shape (card, length)
    min_distance: int
    max_distance: int

    @property
    def card(self) -> int:
        return self.words.shape[0]


@dataclass(frozen=True)
class HardInstance:
    kind: str
    design: DesignMatrix
    omegas: NDArray[np.float64]  # truth_i = omegas[i] @ design.values.T
    gamma: float
    sigma: float
    kl_budget: float
    kl_max: float
    separation_min: float
    separation_max: float
    meta: dict = field(default_factory=dict)

    @property
    def card(self) -> int:
        return self.omegas.shape[0]

    def truth(self, i: int) -> NDArray[np.float64]:
        return self.design.values @ self.omegas[i]

    @property
    def truth_set(self) -> list[NDArray[np.float64]]:
        return [self.truth(i) for i in range(self.card)]

    def sidecar(self) -> dict:
        d = {
            "kind": self.kind,
            "gamma": self.gamma,
            "sigma": self.sigma,
            "card": self.card,
            "kl_budget": self.kl_budget,
            "kl_max": self.kl_max,
            "separation_min": self.separation_min,
        }
        d.update(self.meta)
        return d

    def export(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.design.to_csv(out / "design.csv")
        with open(out / "instance.json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def make_ms_hard(n: int, m_dict: int, sigma: float) -> HardInstance:
    if m_dict < 2:
        raise InvalidInputError("need M >= 2")
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    b = block_size(m_dict)
    if m_dict * b > n:
        raise PreconditionError(
            f"MS-hard instance needs M log M <= n disjoint design points: {m_dict}*{b} > {n}"
        )
    log_card = math.log(m_dict)
    budget = KL_FRACTION * log_card
    # gamma = sigma/4 gives KL = b/16; shrink when b > log M (M = 2).
    gamma = sigma / 4.0 * min(1.0, math.sqrt(log_card / b))
    F = np.zeros((n, m_dict))
    for j in range(m_dict):
        F[j * b:(j + 1) * b, j] = gamma
    design = DesignMatrix(F, bound_l=gamma)
    sep = 2.0 * gamma**2 * b / n
    kl = n / (2.0 * sigma**2) * sep
    return HardInstance(
        kind="MS-hard", design=design, omegas=np.eye(m_dict), gamma=gamma, sigma=sigma,
        kl_budget=budget, kl_max=kl, separation_min=sep, separation_max=sep,
        meta={"block_size": b},
    )


def _ball_offsets(length: int, radius: int) -> NDArray[np.int64]:
    """All bit masks of Hamming weight 1..radius."""
    from itertools import combinations

    offs = [sum(1 << i for i in c) for r in range(1, radius + 1) for c in combinations(range(length), r)]
    return np.array(offs, dtype=np.int64)


def _bits(ints: NDArray[np.int64], length: int) -> NDArray[np.uint8]:
    # Word k is written most-significant bit first so counting order is lexicographic.
    shifts = np.arange(length - 1, -1, -1, dtype=np.int64)
    return ((ints[:, None] >> shifts) & 1).astype(np.uint8)


def vg_code(length: int, target_distance: int | None = None, max_length: int = 26) -> BinaryCode:
    """Greedy lexicographic binary code with pairwise Hamming distance >= target_distance.

    Words of ``{0,1}^length`` are scanned in counting order and kept when
    no kept word lies within distance ``target_distance - 1``.  The
    distance property is then re-verified by enumerating every
    Hamming ball around every codeword.
    """
    if length < 8:
        raise PreconditionError("binary code construction needs length >= 8; use the two-point family")
    if length > max_length:
        raise InvalidInputError(f"length {length} exceeds the exhaustive limit {max_length}")
    d = math.ceil(length / 8) if target_distance is None else int(target_distance)
    if not 1 <= d <= length:
        raise InvalidInputError(f"target distance must be in [1, {length}]")
    size = 1 << length
    offsets = _ball_offsets(length, d - 1)
    covered = bytearray(size)
    covered_np = np.frombuffer(covered, dtype=np.uint8)
    kept = []
    pos = 0
    while True:
        pos = covered.find(0, pos)
        if pos < 0:
            break
        kept.append(pos)
        covered_np[pos] = 1
        if offsets.size:
            covered_np[pos ^ offsets] = 1
        pos += 1
    words_int = np.array(kept, dtype=np.int64)

    in_code = np.zeros(size, dtype=bool)
    in_code[words_int] = True
    # Independent verification by enumerating Hamming spheres around every codeword.
    min_dist = _min_distance(words_int, in_code, length) if words_int.size > 1 else length
    if min_dist < d:
        raise AssertionError(f"verified minimum distance {min_dist} < target {d}")
    max_dist = _max_distance(in_code, words_int, length)
    code = BinaryCode(length=length, words=_bits(words_int, length), min_distance=min_dist,
                      max_distance=max_dist)
    if target_distance is None and code.card < 2 ** (length / 8):
        raise AssertionError(f"code cardinality {code.card} below 2^(M/8)")
    return code


def _distance_to_code(in_code: NDArray[np.bool_], length: int) -> NDArray[np.int16]:
    # Separable Hamming distance transform over the hypercube, one bit at a time.
    dist = np.where(in_code, 0, length + 1).astype(np.int16)
    for b in range(length):
        view = dist.reshape(-1, 2, 1 << b)
        flipped = view[:, ::-1, :] + 1
        np.minimum(view, flipped, out=view)
    return dist


def _max_distance(in_code, words_int, length) -> int:
    if words_int.size < 2:
        return 0
    # max_{u,v} d(u, v) = length - min_{u} d(~u, code)
    dist = _distance_to_code(in_code, length)
    comp = words_int ^ ((1 << length) - 1)
    return int(length - dist[comp].min())


def _min_distance(words_int, in_code, length) -> int:
    # Smallest r such that some codeword has another codeword at distance r.
    for r in range(1, length + 1):
        offs = _ball_offsets_exact(length, r)
        for start in range(0, words_int.size, 4096):
            block = words_int[start:start + 4096]
            if in_code[block[:, None] ^ offs[None, :]].any():
                return r
    return length


def _ball_offsets_exact(length: int, r: int) -> NDArray[np.int64]:
    from itertools import combinations

    return np.array([sum(1 << i for i in c) for c in combinations(range(length), r)], dtype=np.int64)


def make_l_hard(n: int, m_dict: int, sigma: float, target_distance: int | None = None) -> HardInstance:
    """Point-mass dictionary with code-indexed truths.

    For ``M >= 8`` the truths are ``sum_j omega_j f_j`` over a greedy
    binary code.  For ``2 <= M < 8`` the two-point family is used:
    ``f_1 = 0`` and ``f_2`` constant ``gamma / sqrt(n)``, both placed in
    the dictionary; remaining columns are point masses.
    """
    if m_dict < 2:
        raise InvalidInputError("need M >= 2")
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    if m_dict > n:
        raise PreconditionError(f"L-hard instance needs M <= n: {m_dict} > {n}")

    if m_dict >= 8:
        code = vg_code(m_dict, target_distance)
        log_card = math.log(code.card)
        gamma = sigma * math.sqrt(log_card / (8.0 * code.max_distance))
        F = np.zeros((n, m_dict))
        F[np.arange(m_dict), np.arange(m_dict)] = gamma
        omegas = code.words.astype(float)
        sep_min = gamma**2 * code.min_distance / n
        sep_max = gamma**2 * code.max_distance / n
        meta = {"code_length": m_dict, "code_min_distance": code.min_distance,
                "code_max_distance": code.max_distance,
                "code_words": ["".join(map(str, w)) for w in code.words[:4096]]}
        if code.card > 4096:
            meta["code_words_truncated"] = True
    else:
        log_card = math.log(2.0)
        gamma = sigma * math.sqrt(log_card / 8.0)
        F = np.zeros((n, m_dict))
        F[:, 1] = gamma / math.sqrt(n)
        for j in range(2, m_dict):
            F[j, j] = gamma
        omegas = np.zeros((2, m_dict))
        omegas[1, 1] = 1.0
        sep_min = sep_max = gamma**2 / n
        meta = {"two_point": True}
    design = DesignMatrix(F, bound_l=gamma)
    kl_max = n / (2.0 * sigma**2) * sep_max
    return HardInstance(
        kind="L-hard", design=design, omegas=omegas, gamma=gamma, sigma=sigma,
        kl_budget=KL_FRACTION * log_card, kl_max=kl_max,
        separation_min=sep_min, separation_max=sep_max, meta=meta,
    )


@dataclass(frozen=True)
class MinimaxReport:
    mean_risks: NDArray[np.float64]
    se_risks: NDArray[np.float64]
    max_risk: float
    max_se: float
    worst_truth: int


class EstimatorFailure(RuntimeError):
    def __init__(self, truth: int, rep: int, cause: Exception):
        super().__init__(f"estimator failed on truth {truth}, replication {rep}: {cause!r}")
        self.truth = truth
        self.rep = rep


def _noise(seed: int, truth: int, rep: int, n: int) -> NDArray[np.float64]:
    return np.random.default_rng(np.random.SeedSequence([seed, truth, rep])).standard_normal(n)


def minimax_eval(
    inst: HardInstance,
    estimator: Callable[[DesignMatrix, NDArray[np.float64], int], ArrayLike],
    reps: int,
    seed: int,
    sigma: float | None = None,
    truths: Sequence[int] | None = None,
) -> MinimaxReport:
    """Worst-case mean risk of ``estimator`` over the instance's truths.

    ``estimator(design, y, truth_index)`` returns fitted values at the
    design points; the truth index lets tests build cheating baselines.
    ``sigma`` overrides the instance noise level (0 gives noiseless data).
    """
    if reps < 1:
        raise InvalidInputError("reps must be >= 1")
    sigma = inst.sigma if sigma is None else sigma
    idx = range(inst.card) if truths is None else truths
    means, ses = [], []
    for t in idx:
        g = inst.truth(t)
        risks = np.empty(reps)
        for r in range(reps):
            y = g + sigma * _noise(seed, t, r, inst.design.n)
            try:
                fitted = np.asarray(estimator(inst.design, y, t), dtype=float)
            except Exception as exc:
                raise EstimatorFailure(t, r, exc) from exc
            risks[r] = empirical_norm_sq(fitted - g)
        means.append(risks.mean())
        ses.append(risks.std(ddof=1) / math.sqrt(reps) if reps > 1 else 0.0)
    means, ses = np.array(means), np.array(ses)
    w = int(np.argmax(means))
    return MinimaxReport(means, ses, float(means[w]), float(ses[w]), int(list(idx)[w]))
