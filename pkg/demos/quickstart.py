"""Walk through one small ratings table from load to imputation.

Run with ``python demos/quickstart.py``.
"""
import tempfile
from pathlib import Path

import numpy as np

from ratingimpute import (RatingMatrix, build_weights, closure_levels, impute_dqp_svas,
                          impute_qp_as, load_csv, pair_report)

CSV = """school,agency_a,agency_b,agency_c,agency_d
s01,5,4,NA,5
s02,4,NA,4,4
s03,3,3,2,NA
s04,NA,2,2,2
s05,1,1,NA,1
s06,2,NA,1,2
s07,4,5,5,NA
s08,NA,3,3,3
"""

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "schools.csv"
    path.write_text(CSV)
    M, dropped = load_csv(path)

print(f"{M.m} subjects, {M.n} rating providers, {M.n_missing} missing cells")

# which cells can be pinned down, and at which level
levels = closure_levels(M)
print("level counts:", levels.level_counts(), "| level-1 dataset:", levels.is_level1)

# pairwise agreement between providers drives the weights
report = pair_report(M)
print("tau-b grid:")
print(np.array2string(report.tau, precision=2))
W = build_weights(M)

qp = impute_qp_as(M, W)
dq = impute_dqp_svas(M, W)
print(f"{'cell':<22}{'qp-as':>8}{'dqp-svas':>10}")
for (i, j), a, b in zip(qp.index, qp.continuous, dq.continuous):
    print(f"{M.row_labels[i] + ' / ' + M.col_labels[j]:<22}{a:>8.3f}{b:>10.3f}")

print("\ncompleted matrix (qp-as, rounded):")
print(qp.rounded.values.astype(int))

# the three-row example: both solvers give 2.5 before rounding
tiny = RatingMatrix.from_rows([[1, 1], [2, 2], [3, None]])
print("\n3x2 fixture:", impute_qp_as(tiny).continuous[0], impute_dqp_svas(tiny).continuous[0])
