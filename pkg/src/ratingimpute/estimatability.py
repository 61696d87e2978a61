"""When is imputation well defined?

A missing cell ``(i, j)`` becomes estimatable at level ``v`` once some other
row ``i'`` and column ``j'`` give a 2x2 block whose three other corners are
already known (observed, or estimatable at a lower level). The whole matrix
is estimatable exactly when the rating-provider graph (columns joined when
they share a rated subject) is connected.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .data import RatingMatrix


@dataclass(frozen=True)
class EstimatabilityReport:
    """Per-entry levels plus dataset-wide verdicts.

    ``entry_level`` is 0 on observed cells, ``v >= 1`` on level-v cells and
    -1 where no level exists.
    """

    entry_level: np.ndarray
    dataset_level: int | None
    components: tuple
    is_estimatable: bool
    is_level1: bool

    def level_counts(self) -> dict:
        levels, counts = np.unique(self.entry_level, return_counts=True)
        return {int(v): int(c) for v, c in zip(levels, counts)}

    def entries_at(self, level: int) -> list:
        return [tuple(map(int, e)) for e in np.argwhere(self.entry_level == level)]

    def to_dict(self) -> dict:
        levels = [[None if v < 0 else int(v) for v in row] for row in self.entry_level.tolist()]
        return {"entry_level": levels, "dataset_level": self.dataset_level,
                "components": [list(c) for c in self.components],
                "is_estimatable": self.is_estimatable, "is_level1": self.is_level1}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class RPGraph:
    adjacency: np.ndarray
    components: tuple

    @property
    def is_connected(self) -> bool:
        return len(self.components) <= 1


def _require_assumption1(M: RatingMatrix):
    empty = np.nonzero(~M.observed.any(axis=1))[0]
    if len(empty):
        raise ValueError(f"rows {empty.tolist()} have no observed rating; drop them first")


def _closure(known: np.ndarray) -> np.ndarray:
    level = np.where(known, 0, -1)
    known = known.copy()
    v = 0
    while True:
        k = known.astype(np.int64)
        # witnesses[i, j] = #{(i', j'): known[i', j] & known[i, j'] & known[i', j']}
        witnesses = k @ (k.T @ k)
        new = ~known & (witnesses > 0)
        if not new.any():
            return level
        v += 1
        level[new] = v
        known |= new


def closure_levels(M: RatingMatrix) -> EstimatabilityReport:
    """Assign every cell its minimal estimatability level.

    Rounds stop at the first empty level set; once a level is empty every
    later one is too.
    """
    level = _closure(M.observed)
    graph = rp_graph(M)
    estimatable = bool((level >= 0).all())
    dataset_level = int(level.max()) if estimatable else None
    return EstimatabilityReport(
        entry_level=level,
        dataset_level=dataset_level,
        components=graph.components,
        is_estimatable=estimatable,
        is_level1=estimatable and dataset_level <= 1,
    )


def closure_levels_reference(M: RatingMatrix) -> np.ndarray:
    """Literal scan over every 2x2 block per round. Slow; used as an oracle."""
    m, n = M.shape
    known = M.observed.copy()
    level = np.where(known, 0, -1)
    v = 0
    while True:
        v += 1
        found = []
        for i in range(m):
            for j in range(n):
                if known[i, j]:
                    continue
                if any(known[i2, j] and known[i, j2] and known[i2, j2]
                       for i2 in range(m) if i2 != i
                       for j2 in range(n) if j2 != j):
                    found.append((i, j))
        if not found:
            return level
        for i, j in found:
            known[i, j] = True
            level[i, j] = v


def _components(adjacency: np.ndarray) -> tuple:
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        queue, comp = deque([start]), [start]
        while queue:
            node = queue.popleft()
            for nb in np.nonzero(adjacency[node] & ~seen)[0]:
                seen[nb] = True
                comp.append(int(nb))
                queue.append(int(nb))
        comps.append(tuple(sorted(comp)))
    return tuple(comps)


def rp_graph(M: RatingMatrix) -> RPGraph:
    """Column graph: an edge joins two columns that share a rated subject."""
    k = M.observed.astype(np.int64)
    adjacency = (k.T @ k) > 0
    np.fill_diagonal(adjacency, False)
    adjacency.setflags(write=False)
    return RPGraph(adjacency, _components(adjacency))


def is_estimatable(M: RatingMatrix):
    """Return ``(flag, components)``; flag is True iff the graph is connected."""
    _require_assumption1(M)
    graph = rp_graph(M)
    return graph.is_connected, graph.components


def is_level1(M: RatingMatrix):
    """Check that every column's neighbourhood covers every subject.

    Returns ``(True, None)`` or ``(False, (uncovered_rows, column))`` for the
    first column that fails.
    """
    _require_assumption1(M)
    obs = M.observed
    k = obs.astype(np.int64)
    shares = (k.T @ k) > 0   # diagonal true iff the column has a rating
    for col in range(M.n):
        covered = obs[:, shares[col]].any(axis=1)
        if not covered.all():
            return False, (tuple(np.nonzero(~covered)[0].tolist()), col)
    return True, None


def submatrix_blocks(M: RatingMatrix):
    """Yield ``(rows, cols)`` for each graph component: rows rated in the block."""
    obs = M.observed
    for comp in rp_graph(M).components:
        cols = np.array(comp)
        rows = np.nonzero(obs[:, cols].any(axis=1))[0]
        yield rows, cols
