"""Multiple imputation by repeated row subsampling.

Each round draws a fixed share of the rows, imputes the subsample with a
base solver and records the values it gives each missing cell. Rounds stop
once every row has been drawn often enough. The spread of the recorded
values measures how stable the imputation is.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .consensus import build_weights
from .data import MissingIndex, RatingMatrix, column_scales, round_clamp
from .dqp import impute_dqp_svas
from .estimatability import is_estimatable, is_level1
from .exceptions import EstimatabilityError, MultipleImputationError
from .qp import impute_qp_as

BASES = {"qp-as": impute_qp_as, "dqp-svas": impute_dqp_svas}
MAX_RETRIES = 100


@dataclass(frozen=True)
class MIResult:
    """Per-cell sample values and stability summaries.

    ``samples[q]`` holds the continuous values recorded for cell
    ``index.entry(q)``.
    """

    index: MissingIndex
    samples: tuple
    sample_count: int
    coverage: np.ndarray
    zero_sd_fraction: float
    avg_sd: float
    aggregated: RatingMatrix
    base: str

    def to_dict(self, full=False) -> dict:
        out = {"base": self.base, "samples": self.sample_count,
               "zero_sd_fraction": self.zero_sd_fraction, "avg_sd": self.avg_sd,
               "min_coverage": int(self.coverage.min()) if len(self.coverage) else 0,
               "n_missing": len(self.index)}
        if full:
            out["per_entry"] = [{"row": int(i), "col": int(j), "values": s.tolist()}
                                for (i, j), s in zip(self.index, self.samples)]
        return out

    def to_json(self, full=False, **kwargs) -> str:
        return json.dumps(self.to_dict(full), **kwargs)


def _draw(M, size, rng, need_level1):
    for _ in range(MAX_RETRIES):
        rows = np.sort(rng.choice(M.m, size=size, replace=False))
        sub = M.take(rows)
        if not is_estimatable(sub)[0]:
            continue
        if need_level1 and not is_level1(sub)[0]:
            continue
        return rows, sub
    raise MultipleImputationError(
        f"no estimatable subsample in {MAX_RETRIES} draws; try a larger row fraction")


def impute_mi(M: RatingMatrix, W=None, base="dqp-svas", row_fraction=0.8, min_coverage=10,
              rng=None, aggregate="mean", max_rounds=100_000) -> MIResult:
    """Repeat ``base`` on random row subsamples until each row is covered.

    Parameters
    ----------
    M : RatingMatrix
        Must be estimatable.
    W : WeightMatrix, optional
        Computed once from the full matrix and reused in every round.
    row_fraction : float
        Each round draws ``ceil(row_fraction * m)`` rows without replacement.
    min_coverage : int
        Stop once every row has been drawn this many times.
    aggregate : {"mean", "mode"}
        Mean of continuous samples then round, or the most common rounded
        value (smallest on ties).
    """
    if base not in BASES:
        raise ValueError(f"unknown base {base!r}; choose from {sorted(BASES)}")
    if not 0.0 < row_fraction <= 1.0:
        raise ValueError("row_fraction must lie in (0, 1]")
    if aggregate not in ("mean", "mode"):
        raise ValueError("aggregate must be 'mean' or 'mode'")
    ok, comps = is_estimatable(M)
    if not ok:
        raise EstimatabilityError(comps)
    rng = np.random.default_rng(rng)
    if W is None:
        W = build_weights(M)
    scale = column_scales(M)
    index = MissingIndex.from_matrix(M)
    size = max(2, math.ceil(row_fraction * M.m - 1e-9))
    size = min(size, M.m)
    coverage = np.zeros(M.m, dtype=int)
    collected = [[] for _ in range(len(index))]
    imputer = BASES[base]
    rounds = 0
    while coverage.min() < min_coverage:
        if rounds >= max_rounds:
            raise MultipleImputationError(f"coverage not reached after {max_rounds} rounds")
        rows, sub = _draw(M, size, rng, base == "dqp-svas")
        res = imputer(sub, W, integer_mode=False, scale=scale)
        for (i, j), v in zip(res.index, res.continuous):
            collected[index.position(int(rows[i]), int(j))].append(float(v))
        coverage[rows] += 1
        rounds += 1

    samples = tuple(np.array(s) for s in collected)
    zero_sd = []
    sds = []
    agg = np.empty(len(index))
    for q, s in enumerate(samples):
        j = index.cols[q]
        r = round_clamp(s, scale, np.full(len(s), j))
        zero_sd.append(bool(np.all(r == r[0])))
        sds.append(0.0 if np.all(s == s[0]) else float(np.std(s)))
        if aggregate == "mean":
            agg[q] = s.mean()
        else:
            vals, counts = np.unique(r, return_counts=True)
            agg[q] = vals[np.argmax(counts)]
    values = np.array(M.values)
    if len(index):
        fill = round_clamp(agg, scale, index.cols) if M.integer_mode else agg
        values[index.rows, index.cols] = fill
    return MIResult(index, samples, rounds, coverage,
                    float(np.mean(zero_sd)) if zero_sd else 1.0,
                    float(np.mean(sds)) if sds else 0.0,
                    M.with_values(values), base)
