import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
from ratingimpute import RatingMatrix  # noqa: E402

# Observation patterns for the two worked estimatability examples (1 = rated).
PATTERN_A = np.array([[1, 0, 0, 0],
                  [1, 0, 0, 0],
                  [1, 1, 0, 0],
                  [0, 1, 0, 0],
                  [0, 0, 1, 1]], dtype=bool)
PATTERN_B = np.array([[0, 0, 0, 1],
                  [1, 1, 0, 0],
                  [1, 1, 1, 0],
                  [0, 0, 1, 1],
                  [1, 0, 1, 0]], dtype=bool)


def pattern_matrix(mask, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.integers(1, 6, size=mask.shape).astype(float)
    X[~mask] = np.nan
    return RatingMatrix(X)


@pytest.fixture
def pattern_a():
    return pattern_matrix(PATTERN_A)


@pytest.fixture
def pattern_b():
    return pattern_matrix(PATTERN_B)


@pytest.fixture
def small3x2():
    return RatingMatrix.from_rows([[1, 1], [2, 2], [3, None]])


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)


def random_estimatable(rng, m, n, p_missing, max_missing=None, level1=False):
    """Draw masks until the column graph is connected (and level 1 if asked)."""
    from oracles import random_mask_matrix
    from ratingimpute.estimatability import is_estimatable, is_level1

    while True:
        X = random_mask_matrix(rng, m, n, p_missing)
        M = RatingMatrix(X)
        if max_missing is not None and not 0 < M.n_missing <= max_missing:
            continue
        if not np.all(np.nanmax(X, axis=0) > np.nanmin(X, axis=0)):
            continue
        if not is_estimatable(M)[0]:
            continue
        if level1 and not is_level1(M)[0]:
            continue
        return M
