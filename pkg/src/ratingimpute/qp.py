"""QP-AS: exact minimiser of the weighted discordance objective.

For columns normalised by their category counts, the discordance of rows
``k, i`` against columns ``l, j`` is ``(x_kl - x_il - x_kj + x_ij)**2``
weighted by ``w_lj``. The objective sums this over every anchor cell
``(k, l)`` and every partner cell ``(i, j)`` in a different row and column.
Setting the gradient in the missing cells to zero gives a dense symmetric
positive definite system ``A z = b`` which is assembled in closed form and
solved by Cholesky factorisation.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .consensus import WeightMatrix, as_weight_array, build_weights
from .data import ColumnScale, MissingIndex, RatingMatrix, column_scales
from .estimatability import is_estimatable, submatrix_blocks
from .exceptions import CapacityError, DimensionError, EstimatabilityError, SolverError
from .result import ImputationResult, finish

DEFAULT_MAX_MISSING = 20_000
_ROW_BLOCK = 512


@dataclass(frozen=True)
class LinearSystem:
    """First-order system for the missing cells of ``matrix``.

    With ``dedupe`` the system is built on the distinct rows only;
    ``multiplicities[r]`` counts the copies of reduced row ``r`` and
    ``row_map[i]`` sends original row ``i`` to its reduced row.
    """

    A: np.ndarray
    b: np.ndarray
    index: MissingIndex
    scale: ColumnScale
    matrix: RatingMatrix
    multiplicities: np.ndarray | None = None
    row_map: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.b)


def _check_inputs(M, W):
    if M.m < 2 or M.n < 2:
        raise DimensionError(f"need at least 2 rows and 2 columns, got {M.shape}")
    if W.shape != (M.n, M.n):
        raise DimensionError(f"weight matrix shape {W.shape} does not match {M.n} columns")
    ok, components = is_estimatable(M)
    if not ok:
        raise EstimatabilityError(components)


def _dedupe(M: RatingMatrix):
    missing = M.missing
    key = np.hstack([np.where(missing, 0.0, M.values), missing.astype(float)])
    _, first, inverse, counts = np.unique(key, axis=0, return_index=True,
                                          return_inverse=True, return_counts=True)
    return M.take(first), counts.astype(float), inverse.ravel()


def assemble_system(M: RatingMatrix, W, dedupe=False, scale=None,
                    max_missing=DEFAULT_MAX_MISSING) -> LinearSystem:
    """Build ``A`` and ``b`` for the missing cells of ``M``.

    Row and column sums are precomputed once so assembly costs
    ``O(|Q|^2 + m n^2)``.
    """
    w = as_weight_array(W)
    _check_inputs(M, w)
    scale = column_scales(M) if scale is None else scale
    if dedupe:
        X, d, row_map = _dedupe(M)
    else:
        X, d, row_map = M, np.ones(M.m), None
    m_total = float(d.sum())
    index = MissingIndex.from_matrix(X)
    p = len(index)
    if p > max_missing:
        raise CapacityError(p, max_missing)

    wz = w.copy()
    np.fill_diagonal(wz, 0.0)
    sw = wz.sum(axis=1)
    c = scale.categories
    Y = np.where(X.missing, 0.0, X.values / c)

    rows, cols = index.rows, index.cols
    dq = d[rows]
    # b_q = 2 d_q [ m (Y wz)[i_q, j_q] + sw_jq * sum_i d_i y_ij_q - sum_i d_i (Y wz)[i, j_q] ]
    row_w = Y @ wz
    col_sum = d @ Y
    total = d @ row_w
    b = 2.0 * dq * (m_total * row_w[rows, cols] + sw[cols] * col_sum[cols] - total[cols])

    # A_qs = 2 * G_qs * S_qs with
    #   G = d_q (m - d_q) on shared rows, -d_q d_s otherwise
    #   S = sw_jq on shared columns, -w_jq_js otherwise
    A = np.empty((p, p))
    same_row_factor = dq * (m_total - dq)
    for start in range(0, p, _ROW_BLOCK):
        sl = slice(start, min(start + _ROW_BLOCK, p))
        r = rows[sl, None] == rows[None, :]
        k = cols[sl, None] == cols[None, :]
        S = np.where(k, sw[cols[sl], None], -wz[np.ix_(cols[sl], cols)])
        G = np.where(r, same_row_factor[sl, None], -np.outer(dq[sl], dq))
        np.multiply(G, S, out=A[sl])
    A *= 2.0
    return LinearSystem(A, b, index, scale, X,
                        d if dedupe else None, row_map)


def solve_system(L: LinearSystem) -> np.ndarray:
    """Cholesky solve of ``A z = b``; returns normalised values."""
    if L.size == 0:
        return np.zeros(0)
    try:
        factor = linalg.cho_factor(L.A, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SolverError("system matrix is not positive definite; re-check "
                          "estimatability (the rating-provider graph must be connected)") from exc
    z = linalg.cho_solve(factor, L.b, check_finite=False)
    tol = 1e-8 * (1.0 + np.max(np.abs(L.b)))
    r = L.b - L.A @ z
    if np.max(np.abs(r)) > tol:
        # one round of iterative refinement
        z = z + linalg.cho_solve(factor, r, check_finite=False)
        r = L.b - L.A @ z
        if np.max(np.abs(r)) > tol:
            raise SolverError(f"residual {np.max(np.abs(r)):.3e} exceeds tolerance {tol:.3e}")
    return z


def residual(L: LinearSystem, z) -> float:
    if L.size == 0:
        return 0.0
    return float(np.max(np.abs(L.A @ z - L.b)))


def objective_value(filled: RatingMatrix, W, missing=None, scale: ColumnScale | None = None,
                    anchors="all") -> float:
    """Weighted discordance of a completed matrix.

    ``anchors="all"`` sums over every anchor cell (the function QP-AS
    minimises). ``anchors="missing"`` restricts anchors to ``missing``, a
    :class:`MissingIndex` or iterable of cells. ``scale`` should be the
    scale of the incomplete source; it defaults to the filled matrix's own.
    """
    w = as_weight_array(W)
    scale = column_scales(filled) if scale is None else scale
    a = filled.values / scale.categories
    if np.isnan(a).any():
        raise ValueError("objective needs a completed matrix")
    m, n = a.shape
    if anchors == "all":
        total = 0.0
        for l in range(n):
            for j in range(n):
                if l == j:
                    continue
                u = a[:, l] - a[:, j]
                total += w[l, j] * (2.0 * m * np.dot(u, u) - 2.0 * u.sum() ** 2)
        return float(total)
    if anchors != "missing":
        raise ValueError(f"unknown anchors mode {anchors!r}")
    if missing is None:
        raise ValueError("anchors='missing' needs the missing cells")
    if not isinstance(missing, MissingIndex):
        missing = MissingIndex.from_entries(missing)
    total = 0.0
    for k, l in missing:
        u = a[:, [l]] - a                     # u[i, j] = a_il - a_ij
        uk = u[k]
        # sum over i of (u_k - u_i)^2 = m u_k^2 - 2 u_k sum(u) + sum(u^2)
        per_col = m * uk ** 2 - 2.0 * uk * u.sum(axis=0) + (u ** 2).sum(axis=0)
        per_col[l] = 0.0
        total += float(w[l] @ per_col)
    return total


def impute_qp_as(M: RatingMatrix, W=None, integer_mode=None, dedupe=False,
                 max_missing=DEFAULT_MAX_MISSING, scale=None) -> ImputationResult:
    """Impute every missing cell by solving the first-order system.

    Parameters
    ----------
    M : RatingMatrix
        Must be estimatable (connected rating-provider graph).
    W : WeightMatrix or array, optional
        Pair weights; Kendall tau-b weights of ``M`` by default.
    integer_mode : bool, optional
        Round and clamp into each column's observed range. Defaults to
        ``M.integer_mode``.
    dedupe : bool
        Collapse identical rows before assembling.
    """
    t0 = time.perf_counter()
    integer_mode = M.integer_mode if integer_mode is None else integer_mode
    if W is None:
        W = build_weights(M)
    scale = column_scales(M) if scale is None else scale
    L = assemble_system(M, W, dedupe=dedupe, scale=scale, max_missing=max_missing)
    z = solve_system(L)
    res = residual(L, z)
    c = scale.categories
    index = MissingIndex.from_matrix(M)
    if dedupe:
        reduced_pos = np.array([L.index.position(int(L.row_map[i]), j) for i, j in index],
                               dtype=int)
        z_full = z[reduced_pos] if len(index) else np.zeros(0)
    else:
        z_full = z
    continuous = z_full * c[index.cols]
    result = finish(M, index, continuous, scale, integer_mode, "qp-as",
                    residual_norm=res, diagnostics={"system_size": L.size, "dedupe": dedupe})
    obj = objective_value(result.filled, W, scale=scale)
    return ImputationResult(result.source, result.index, result.continuous, result.rounded,
                            result.algorithm, obj, res, time.perf_counter() - t0,
                            result.diagnostics)


def impute_per_component(M: RatingMatrix, W, imputer, **kwargs) -> ImputationResult:
    """Run ``imputer`` separately on each connected block of the graph.

    Cells outside every block (subjects a component never rates) stay
    missing in the output.
    """
    t0 = time.perf_counter()
    w = as_weight_array(W)
    scale = column_scales(M)
    integer_mode = kwargs.pop("integer_mode", None)
    integer_mode = M.integer_mode if integer_mode is None else integer_mode
    index = MissingIndex.from_matrix(M)
    continuous = np.full(len(index), np.nan)
    blocks = []
    for rows, cols in submatrix_blocks(M):
        sub = M.take(rows, cols)
        blocks.append({"cols": [M.col_labels[j] for j in cols], "rows": len(rows),
                       "missing": sub.n_missing})
        if sub.n_missing == 0:
            continue
        r = imputer(sub, WeightMatrix(w[np.ix_(cols, cols)]), integer_mode=False,
                    scale=scale.take(cols), **kwargs)
        for (i, j), v in zip(r.index, r.continuous):
            continuous[index.position(int(rows[i]), int(cols[j]))] = v
    done = ~np.isnan(continuous)
    sub_index = MissingIndex(index.rows[done], index.cols[done],
                             {e: q for q, e in enumerate(zip(index.rows[done].tolist(),
                                                              index.cols[done].tolist()))})
    result = finish(M, sub_index, continuous[done], scale, integer_mode,
                    f"{getattr(imputer, 'algorithm', imputer.__name__)} (per component)",
                    wall_time=time.perf_counter() - t0,
                    diagnostics={"components": blocks,
                                 "left_missing": int((~done).sum())})
    return result


impute_qp_as.algorithm = "qp-as"
