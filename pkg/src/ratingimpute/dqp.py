"""dQP-SVAS: per-entry closed form of the decomposable objective.

Each missing cell ``(p, q)`` is fitted on its own, using only the corner set
of fully observed 2x2 blocks that contain it. The minimiser is a weighted
average over that set, so no imputed value ever feeds another.
"""
from __future__ import annotations

import time

import numpy as np

from .consensus import as_weight_array, build_weights
from .data import ColumnScale, MissingIndex, RatingMatrix, column_scales
from .exceptions import DimensionError, Level1Error
from .result import ImputationResult, finish


def corner_set(M: RatingMatrix, p: int, q: int) -> list:
    """Cells ``(i, j)`` with ``x_ij``, ``x_iq`` and ``x_pj`` all observed.

    Raises
    ------
    Level1Error
        If the set is empty.
    """
    obs = M.observed
    if obs[p, q]:
        raise ValueError(f"cell ({p}, {q}) is observed")
    rows = np.nonzero(obs[:, q])[0]
    cols = np.array([j for j in np.nonzero(obs[p])[0] if j != q], dtype=int)
    out = [(int(i), int(j)) for i in rows if i != p for j in cols if obs[i, j]]
    if not out:
        raise Level1Error([(p, q)])
    return out


def entry_objective(M: RatingMatrix, W, p: int, q: int, x: float, scale=None) -> float:
    """Decomposed objective of cell ``(p, q)`` at value ``x`` (original scale)."""
    w = as_weight_array(W)
    scale = column_scales(M) if scale is None else scale
    c = scale.categories
    X = M.values
    total = 0.0
    for i, j in corner_set(M, p, q):
        d = (x - X[i, q]) / c[q] + (X[i, j] - X[p, j]) / c[j]
        total += w[q, j] * d * d
    return total


def closed_form_entry(M: RatingMatrix, W, p: int, q: int, scale=None) -> float:
    """Literal weighted average over the corner set. Reference path."""
    w = as_weight_array(W)
    scale = column_scales(M) if scale is None else scale
    c = scale.categories
    X = M.values
    num = den = 0.0
    for i, j in corner_set(M, p, q):
        num += w[q, j] * (X[i, q] / c[q] + (X[p, j] - X[i, j]) / c[j])
        den += w[q, j] / c[q]
    return num / den


def _closed_form_all(M: RatingMatrix, w: np.ndarray, c: np.ndarray, index: MissingIndex):
    """Vectorised closed form for every missing cell.

    Uses the column co-occurrence counts ``N = O'O`` and the cross sums
    ``S1 = Y'O``, ``S2 = O'Y`` so each column costs one matrix-vector
    product over its missing rows.
    """
    O = M.observed.astype(float)
    Y = np.where(M.observed, M.values, 0.0)
    N = O.T @ O
    S1 = Y.T @ O          # S1[q, j] = sum_i x_iq over rows observing q and j
    S2 = O.T @ Y          # S2[q, j] = sum_i x_ij over rows observing q and j
    wz = w.copy()
    np.fill_diagonal(wz, 0.0)
    out = np.empty(len(index))
    bad = []
    for q in np.unique(index.cols):
        sel = np.nonzero(index.cols == q)[0]
        P = index.rows[sel]
        coef_a = wz[q] * (S1[q] / c[q] - S2[q] / c)
        coef_b = wz[q] * N[q] / c
        num = O[P] @ coef_a + Y[P] @ coef_b
        den = O[P] @ (wz[q] * N[q]) / c[q]
        empty = den <= 0
        if empty.any():
            bad.extend((int(p), int(q)) for p in P[empty])
        with np.errstate(divide="ignore", invalid="ignore"):
            out[sel] = num / den
    if bad:
        raise Level1Error(sorted(bad))
    return out


def impute_dqp_svas(M: RatingMatrix, W=None, integer_mode=None, fallback=None,
                    scale: ColumnScale | None = None) -> ImputationResult:
    """Impute each missing cell by the closed form over its corner set.

    Parameters
    ----------
    M : RatingMatrix
        Should be level-1 estimatable.
    W : WeightMatrix or array, optional
        Kendall tau-b weights of ``M`` by default.
    integer_mode : bool, optional
        Round and clamp; defaults to ``M.integer_mode``.
    fallback : {None, "qp-as"}
        On a level-1 violation, raise (default) or solve the whole matrix
        with QP-AS instead.

    Raises
    ------
    Level1Error
        Lists every cell with an empty corner set.
    """
    t0 = time.perf_counter()
    if M.m < 2 or M.n < 2:
        raise DimensionError(f"need at least 2 rows and 2 columns, got {M.shape}")
    integer_mode = M.integer_mode if integer_mode is None else integer_mode
    if W is None:
        W = build_weights(M)
    w = as_weight_array(W)
    if w.shape != (M.n, M.n):
        raise DimensionError(f"weight matrix shape {w.shape} does not match {M.n} columns")
    scale = column_scales(M) if scale is None else scale
    index = MissingIndex.from_matrix(M)
    try:
        continuous = _closed_form_all(M, w, scale.categories, index)
    except Level1Error as exc:
        if fallback != "qp-as":
            raise
        from .qp import impute_qp_as
        r = impute_qp_as(M, W, integer_mode=integer_mode, scale=scale)
        diag = dict(r.diagnostics, fallback_from="dqp-svas", level1_violations=len(exc.entries))
        return ImputationResult(r.source, r.index, r.continuous, r.rounded, "qp-as (fallback)",
                                r.objective_value, r.residual_norm,
                                time.perf_counter() - t0, diag)
    return finish(M, index, continuous, scale, integer_mode, "dqp-svas",
                  wall_time=time.perf_counter() - t0)


impute_dqp_svas.algorithm = "dqp-svas"
