"""Benchmark harness: fold deletion, accuracy metrics, baselines, experiments.

Real data is scored by hiding folds of observed ratings and comparing the
imputations with the hidden truth. Synthetic instances are scored directly
against the complete matrix they were generated from.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .consensus import build_weights, kendall_tau_b
from .data import MissingIndex, RatingMatrix, column_scales, load_csv
from .dqp import impute_dqp_svas
from .estimatability import rp_graph
from .exceptions import ConfigError, FoldError, RatingImputeError
from .qp import DEFAULT_MAX_MISSING, impute_qp_as
from .result import ImputationResult, finish
from .synthetic import SynthSpec, generate

ALGORITHMS = ("qp-as", "dqp-svas", "mean", "mode")
METRICS = ("time", "accuracy", "rmse", "mad", "rmse_tau", "mad_tau", "avgd_tau")


@dataclass(frozen=True)
class FoldInstance:
    """One fold: ``observed`` with the fold's ratings hidden.

    ``deleted`` holds ``(row, col, true_value)``; ``protected`` lists fold
    cells that were put back to keep rows, columns and the graph intact.
    """

    observed: RatingMatrix
    deleted: tuple
    fold_id: int
    protected: tuple = ()


def _restore_bridges(X, candidates, restored):
    """Put back candidate cells until the column graph is connected."""
    while True:
        comps = rp_graph(RatingMatrix(X, integer_mode=False)).components
        if len(comps) <= 1:
            return
        comp_of = {c: b for b, comp in enumerate(comps) for c in comp}
        for i, j in candidates:
            if (i, j) in restored:
                continue
            row_cols = np.nonzero(~np.isnan(X[i]))[0]
            if any(comp_of[int(c)] != comp_of[j] for c in row_cols):
                restored.add((i, j))
                yield i, j
                break
        else:
            raise FoldError("cannot reconnect the rating-provider graph from fold cells")


def make_folds(M: RatingMatrix, k: int = 10, rng=None) -> list:
    """Split observed ratings uniformly into ``k`` folds.

    Hidden cells that would empty a row or a column, or disconnect the
    provider graph, are returned to the observed pool.
    """
    if k < 1:
        raise ValueError("k must be positive")
    obs = np.argwhere(M.observed)
    if len(obs) < k:
        raise FoldError(f"{len(obs)} observed entries cannot fill {k} folds")
    if len(rp_graph(M).components) > 1:
        raise FoldError("source matrix is not estimatable")
    rng = np.random.default_rng(rng)
    groups = np.array_split(rng.permutation(len(obs)), k)
    folds = []
    for f, g in enumerate(groups):
        X = np.array(M.values)
        cells = [tuple(int(v) for v in obs[t]) for t in g]
        for i, j in cells:
            X[i, j] = np.nan
        restored = set()
        for axis in (1, 0):
            empty = set(np.nonzero(np.isnan(X).all(axis=axis))[0].tolist())
            for i, j in cells:
                key = i if axis == 1 else j
                if key in empty:
                    X[i, j] = M.values[i, j]
                    restored.add((i, j))
                    empty.discard(key)
        for i, j in _restore_bridges(X, cells, restored):
            X[i, j] = M.values[i, j]
        deleted = tuple((i, j, float(M.values[i, j])) for i, j in cells if (i, j) not in restored)
        protected = tuple(sorted(restored))
        if len(protected) > len(cells) / 2:
            warnings.warn(f"fold {f}: {len(protected)} of {len(cells)} cells had to be kept",
                          RuntimeWarning, stacklevel=2)
        folds.append(FoldInstance(M.with_values(X), deleted, f, protected))
    return folds


def score(imputed: RatingMatrix, deleted) -> tuple:
    """``(accuracy, rmse, mad)`` over the hidden cells."""
    deleted = list(deleted)
    if not deleted:
        raise ValueError("no deleted cells to score")
    rows = np.array([d[0] for d in deleted], dtype=int)
    cols = np.array([d[1] for d in deleted], dtype=int)
    truth = np.array([d[2] for d in deleted], dtype=float)
    guess = imputed.values[rows, cols]
    if np.isnan(guess).any():
        raise ValueError("imputed matrix leaves some deleted cells empty")
    err = guess - truth
    return float(np.mean(err == 0)), float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err)))


def kendall_delta(original: RatingMatrix, imputed: RatingMatrix):
    """Change in pairwise tau-b from ``original`` to ``imputed``.

    Returns ``(rmse_tau, mad_tau, avgd_tau, skipped)``; pairs undefined in
    either matrix are skipped and counted.
    """
    if original.shape != imputed.shape:
        raise ValueError("matrices differ in shape")
    diffs = []
    skipped = 0
    for l, j in itertools.combinations(range(original.n), 2):
        t0 = kendall_tau_b(original.values[:, l], original.values[:, j])
        t1 = kendall_tau_b(imputed.values[:, l], imputed.values[:, j])
        if math.isnan(t0) or math.isnan(t1):
            skipped += 1
            continue
        diffs.append(t1 - t0)
    if not diffs:
        return math.nan, math.nan, math.nan, skipped
    d = np.array(diffs)
    return float(np.sqrt(np.mean(d ** 2))), float(np.mean(np.abs(d))), float(np.mean(d)), skipped


def impute_baseline(M: RatingMatrix, method="column-mean", integer_mode=None) -> ImputationResult:
    """Fill each column with its observed mean (rounded) or mode (smallest on ties)."""
    t0 = time.perf_counter()
    integer_mode = M.integer_mode if integer_mode is None else integer_mode
    scale = column_scales(M)
    index = MissingIndex.from_matrix(M)
    fill = np.empty(M.n)
    for j in range(M.n):
        col = M.values[M.observed[:, j], j]
        if method in ("column-mean", "mean"):
            fill[j] = col.mean()
        elif method in ("column-mode", "mode"):
            vals, counts = np.unique(col, return_counts=True)
            fill[j] = vals[np.argmax(counts)]   # unique sorts, argmax takes the first
        else:
            raise ValueError(f"unknown baseline {method!r}")
    name = "mean" if method in ("column-mean", "mean") else "mode"
    return finish(M, index, fill[index.cols], scale, integer_mode, name,
                  wall_time=time.perf_counter() - t0)


def run_algorithm(name, M: RatingMatrix, W=None, fallback=None, dedupe=False,
                  max_missing=DEFAULT_MAX_MISSING) -> ImputationResult:
    if name == "qp-as":
        return impute_qp_as(M, W, dedupe=dedupe, max_missing=max_missing)
    if name == "dqp-svas":
        return impute_dqp_svas(M, W, fallback=fallback)
    if name in ("mean", "mode"):
        return impute_baseline(M, name)
    raise ConfigError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")


@dataclass
class EvalReport:
    """Per-cell results plus aggregation by group and algorithm."""

    cells: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def aggregate(self) -> list:
        groups = defaultdict(list)
        for c in self.cells:
            groups[(c["group"], c["algorithm"])].append(c)
        out = []
        for (group, alg), rows in groups.items():
            rec = {"group": group, "algorithm": alg, "instances": len(rows),
                   "failed": sum(1 for r in rows if r.get("error"))}
            for key in METRICS:
                vals = [r[key] for r in rows if not r.get("error") and not math.isnan(r[key])]
                rec[key] = float(np.mean(vals)) if vals else math.nan
            out.append(rec)
        return out

    def to_json(self, **kwargs) -> str:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        data = {"config": self.config,
                "aggregate": [{k: clean(v) for k, v in r.items()} for r in self.aggregate()],
                "cells": [{k: clean(v) for k, v in r.items()} for r in self.cells]}
        return json.dumps(data, **kwargs)

    def write_csv(self, path, aggregate=True):
        rows = self.aggregate() if aggregate else self.cells
        keys = (["group", "algorithm", "instances", "failed", *METRICS] if aggregate
                else ["group", "instance", "algorithm", *METRICS, "error"])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: ("NA" if isinstance(r.get(k), float) and math.isnan(r[k])
                                else r.get(k, "")) for k in keys})

    def format_table(self) -> str:
        header = f"{'group':<28}{'algorithm':<10}" + "".join(f"{m:>10}" for m in METRICS)
        lines = [header, "-" * len(header)]
        for r in self.aggregate():
            vals = "".join(f"{'NA':>10}" if math.isnan(r[m]) else f"{r[m]:>10.4f}" for m in METRICS)
            lines.append(f"{r['group']:<28}{r['algorithm']:<10}{vals}")
        return "\n".join(lines)


def _evaluate(report, group, instance, source, deleted, algorithms, weights_mode, epsilon,
              fallback, dedupe, max_missing):
    """Run every algorithm on one incomplete matrix and record the metrics."""
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        W = build_weights(source, weights_mode, epsilon)
    w_time = time.perf_counter() - t0
    for alg in algorithms:
        cell = {"group": group, "instance": instance, "algorithm": alg, "error": ""}
        try:
            res = run_algorithm(alg, source, W, fallback, dedupe, max_missing)
        except RatingImputeError as exc:
            cell.update({m: math.nan for m in METRICS}, error=f"{type(exc).__name__}: {exc}")
            report.cells.append(cell)
            continue
        acc, rmse, mad = score(res.rounded, deleted)
        rt, mt, at, _ = kendall_delta(source, res.rounded)
        elapsed = res.wall_time + (w_time if alg in ("qp-as", "dqp-svas") else 0.0)
        cell.update(time=elapsed, accuracy=acc, rmse=rmse, mad=mad,
                    rmse_tau=rt, mad_tau=mt, avgd_tau=at)
        report.cells.append(cell)


def _grid(syn: dict):
    keys = ("m", "n", "s", "r")
    vals = [syn[k] if isinstance(syn[k], (list, tuple)) else [syn[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*vals)]


def run_experiment(config: dict) -> EvalReport:
    """Run a benchmark described by ``config``.

    Keys: ``algorithms`` (list), ``seed`` (int), and either ``csv`` (path,
    evaluated by ``k`` folds, default 10) or ``synthetic`` (dict of m, n, s,
    r values or lists plus ``seeds``). Optional: ``weights``, ``epsilon``,
    ``fallback``, ``dedupe``, ``max_missing``.
    """
    algorithms = list(config.get("algorithms") or [])
    if not algorithms:
        raise ConfigError("no algorithms given")
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad:
        raise ConfigError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
    if ("csv" in config) == ("synthetic" in config):
        raise ConfigError("give exactly one of 'csv' or 'synthetic'")
    opts = dict(weights_mode=config.get("weights", "kendall"),
                epsilon=float(config.get("epsilon", 0.01)),
                fallback=config.get("fallback"), dedupe=bool(config.get("dedupe", False)),
                max_missing=int(config.get("max_missing", DEFAULT_MAX_MISSING)))
    report = EvalReport(config=dict(config))
    if "csv" in config:
        if "seed" not in config:
            raise ConfigError("fold evaluation needs a seed")
        M, _ = load_csv(config["csv"])
        k = int(config.get("k", 10))
        for fold in make_folds(M, k, int(config["seed"])):
            _evaluate(report, str(config["csv"]), fold.fold_id, fold.observed, fold.deleted,
                      algorithms, **opts)
        return report
    syn = config["synthetic"]
    seeds = syn.get("seeds")
    if seeds is None:
        raise ConfigError("synthetic experiments need 'seeds'")
    for point in _grid(syn):
        group = "m={m} n={n} s={s} r={r}".format(**point)
        for seed in seeds:
            inst = generate(SynthSpec(seed=int(seed), **point))
            idx = MissingIndex.from_matrix(inst.observed)
            deleted = [(i, j, float(inst.truth.values[i, j])) for i, j in idx]
            if not deleted:
                continue
            _evaluate(report, group, seed, inst.observed, deleted, algorithms, **opts)
    return report

