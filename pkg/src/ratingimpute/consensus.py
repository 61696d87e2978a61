"""Pairwise consensus between rating providers.

Kendall tau-b measures how consistently two providers order the subjects
they both rate; the truncated coefficients become the pair weights used by
both solvers. The Mann-Whitney U test checks whether a subject missing from
one provider tends to be rated lower (or higher) by another.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import RatingMatrix

DEFAULT_EPSILON = 0.01
EXACT_U_LIMIT = 12
_BLOCK = 1024


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric provider-pair weights, floored at ``epsilon``.

    The diagonal is stored as 1 and never read by the solvers.
    """

    values: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    mode: str = "kendall"

    def __post_init__(self):
        w = np.array(self.values, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weight matrix must be square")
        if not np.allclose(w, w.T, rtol=0, atol=1e-12):
            raise ValueError("weight matrix must be symmetric")
        w.setflags(write=False)
        object.__setattr__(self, "values", w)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def off_diagonal(self) -> np.ndarray:
        w = self.values.copy()
        np.fill_diagonal(w, 0.0)
        return w

    def scaled(self, factor: float) -> "WeightMatrix":
        return WeightMatrix(self.values * factor, self.epsilon * factor, self.mode)

    def take(self, cols) -> "WeightMatrix":
        cols = np.asarray(cols, dtype=int)
        return WeightMatrix(self.values[np.ix_(cols, cols)], self.epsilon, self.mode)


def as_weight_array(W) -> np.ndarray:
    return W.values if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)


def _pair_counts(x, y):
    """Integer (concordant - discordant, pairs, x-tied pairs, y-tied pairs)."""
    k = len(x)
    s = n1 = n2 = 0
    for start in range(0, k, _BLOCK):
        xs, ys = x[start:start + _BLOCK], y[start:start + _BLOCK]
        dx = np.sign(xs[:, None] - x[None, :]).astype(np.int8)
        dy = np.sign(ys[:, None] - y[None, :]).astype(np.int8)
        # each unordered pair appears twice across the full square
        s += int(np.sum(dx.astype(np.int64) * dy))
        n1 += int(np.sum(dx == 0))
        n2 += int(np.sum(dy == 0))
    # remove the k self-pairs from the tie counts, then halve
    return s // 2, k * (k - 1) // 2, (n1 - k) // 2, (n2 - k) // 2


def kendall_tau_b(x, y) -> float:
    """Tau-b over pairwise-complete observations.

    NaN is returned when fewer than two complete pairs remain or when either
    side is entirely tied.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2:
        return math.nan
    s, n0, n1, n2 = _pair_counts(x, y)
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        return math.nan
    return s / math.sqrt(denom)


def build_weights(M: RatingMatrix, mode="kendall", epsilon=DEFAULT_EPSILON) -> WeightMatrix:
    """Kendall tau-b weights truncated below at ``epsilon`` (or all ones)."""
    n = M.n
    if n < 2:
        raise ValueError("need at least two rating providers")
    if mode == "uniform":
        return WeightMatrix(np.ones((n, n)), epsilon, "uniform")
    if mode != "kendall":
        raise ValueError(f"unknown weight mode {mode!r}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    w = np.ones((n, n))
    undefined = []
    X = M.values
    for l, j in itertools.combinations(range(n), 2):
        tau = kendall_tau_b(X[:, l], X[:, j])
        if math.isnan(tau):
            undefined.append((M.col_labels[l], M.col_labels[j]))
            tau = epsilon
        w[l, j] = w[j, l] = max(tau, epsilon)
    if undefined:
        warnings.warn(f"tau-b undefined for pairs {undefined}; using epsilon={epsilon}",
                      RuntimeWarning, stacklevel=2)
    return WeightMatrix(w, epsilon, "kendall")


@dataclass(frozen=True)
class UTestResult:
    p_value: float
    direction: str
    statistic: float
    method: str

    @property
    def available(self) -> bool:
        return self.method != "na"


NOT_AVAILABLE = UTestResult(math.nan, "na", math.nan, "na")


def _u_exact_p(pooled_ranks, n1, u_obs):
    N = len(pooled_ranks)
    mu = n1 * (N - n1) / 2.0
    base = n1 * (n1 + 1) / 2.0
    obs_dev = abs(u_obs - mu)
    hits = total = 0
    for idx in itertools.combinations(range(N), n1):
        u = sum(pooled_ranks[i] for i in idx) - base
        total += 1
        if abs(u - mu) >= obs_dev - 1e-9:
            hits += 1
    return hits / total


def mann_whitney_u(g1, g2, exact_limit=EXACT_U_LIMIT):
    """Two-sided U test with mid-ranks for ties.

    Uses full enumeration of group assignments when the pooled sample has at
    most ``exact_limit`` values, otherwise the normal approximation with tie
    and continuity corrections.

    Returns ``(u1, p_value, method)`` where ``u1`` is the statistic of ``g1``.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    n1, n2 = len(g1), len(g2)
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups must be non-empty")
    pooled = np.concatenate([g1, g2])
    ranks = stats.rankdata(pooled)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    N = n1 + n2
    if N <= exact_limit:
        return u1, _u_exact_p(ranks.tolist(), n1, u1), "exact"
    mu = n1 * n2 / 2.0
    _, t = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(t ** 3 - t)) / (N * (N - 1))
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term)
    if var <= 0:
        return u1, 1.0, "normal"
    z = max(abs(u1 - mu) - 0.5, 0.0) / math.sqrt(var)
    return u1, float(min(1.0, 2.0 * stats.norm.sf(z))), "normal"


def mann_whitney_missingness(M: RatingMatrix, j: int, l: int, alpha=0.05) -> UTestResult:
    """Compare column ``l`` ratings of subjects unrated vs rated by column ``j``.

    ``direction`` is ``missing-worse`` when the unrated group ranks lower at
    significance ``alpha``, ``missing-better`` when higher, ``none`` otherwise.
    """
    obs = M.observed
    has_l = obs[:, l]
    g1 = M.values[has_l & ~obs[:, j], l]
    g2 = M.values[has_l & obs[:, j], l]
    if len(g1) == 0 or len(g2) == 0:
        return NOT_AVAILABLE
    u1, p, method = mann_whitney_u(g1, g2)
    direction = "none"
    if p < alpha:
        direction = "missing-worse" if u1 < len(g1) * len(g2) / 2.0 else "missing-better"
    return UTestResult(p, direction, u1, method)


@dataclass(frozen=True)
class PairTestReport:
    """Provider-pair grids of tau-b and U-test results.

    ``u_pvalue[j, l]`` tests column ``l`` ratings split by missingness in ``j``.
    """

    labels: tuple
    tau: np.ndarray
    tau_pvalue: np.ndarray
    u_pvalue: np.ndarray
    u_direction: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def tau_available(self) -> np.ndarray:
        return ~np.isnan(self.tau)

    @property
    def u_available(self) -> np.ndarray:
        return self.u_direction != "na"

    def index(self, col) -> int:
        return self.labels.index(col) if isinstance(col, str) else int(col)

    def to_dict(self) -> dict:
        def grid(a):
            return [[None if (isinstance(v, float) and math.isnan(v)) else v for v in row]
                    for row in a.tolist()]
        return {"labels": list(self.labels), "tau": grid(self.tau),
                "tau_pvalue": grid(self.tau_pvalue), "u_pvalue": grid(self.u_pvalue),
                "u_direction": self.u_direction.tolist(), "metadata": self.metadata}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def write_csv(self, path, grid="tau"):
        a = getattr(self, grid)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.labels])
            for label, row in zip(self.labels, a.tolist()):
                w.writerow([label, *("NA" if isinstance(v, float) and math.isnan(v) else v
                                     for v in row)])


def pair_report(M: RatingMatrix, alpha=0.05) -> PairTestReport:
    n = M.n
    X = M.values
    tau = np.full((n, n), np.nan)
    tau_p = np.full((n, n), np.nan)
    for l in range(n):
        for j in range(l, n):
            t = kendall_tau_b(X[:, l], X[:, j])
            tau[l, j] = tau[j, l] = t
            if not math.isnan(t) and l != j:
                keep = ~(np.isnan(X[:, l]) | np.isnan(X[:, j]))
                p = float(stats.kendalltau(X[keep, l], X[keep, j]).pvalue)
                tau_p[l, j] = tau_p[j, l] = p
    u_p = np.full((n, n), np.nan)
    direction = np.full((n, n), "na", dtype=object)
    for j in range(n):
        for l in range(n):
            r = mann_whitney_missingness(M, j, l, alpha)
            u_p[j, l] = r.p_value
            direction[j, l] = r.direction
    meta = {"u_test": "two-sided, mid-rank ties; exact enumeration when pooled size "
                      f"<= {EXACT_U_LIMIT}, else normal approximation with tie and "
                      "continuity correction",
            "tau": "tau-b over pairwise-complete rows", "alpha": alpha}
    return PairTestReport(tuple(M.col_labels), tau, tau_p, u_p, direction, meta)


def select_columns(report: PairTestReport, target, threshold: float) -> list:
    """Target column plus every column whose tau-b with it reaches ``threshold``.

    If nothing qualifies, warn and fall back to the single best-correlated
    neighbour.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [-1, 1]")
    t = report.index(target)
    row = report.tau[t]
    picked = [j for j in range(len(report.labels))
              if j != t and not math.isnan(row[j]) and row[j] >= threshold]
    if not picked:
        candidates = [j for j in range(len(report.labels)) if j != t and not math.isnan(row[j])]
        warnings.warn(f"no column reaches tau-b >= {threshold} with "
                      f"{report.labels[t]!r}; keeping the best neighbour", stacklevel=2)
        if candidates:
            picked = [max(candidates, key=lambda j: row[j])]
    return sorted([t, *picked])
