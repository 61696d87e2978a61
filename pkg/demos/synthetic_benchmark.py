"""Compare the solvers against the column baselines on synthetic data.

Higher input correlation ``s`` should make the ratings easier to recover.
A reduced grid keeps the run under a minute.
"""
import sys

from ratingimpute import run_experiment

seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5

config = {
    "algorithms": ["qp-as", "dqp-svas", "mean", "mode"],
    "seed": 0,
    "synthetic": {"m": 200, "n": 6, "s": [0.3, 0.5, 0.7], "r": 0.3, "seeds": list(range(seeds))},
}
report = run_experiment(config)
print(report.format_table())

by_group = {}
for row in report.aggregate():
    by_group.setdefault(row["group"], {})[row["algorithm"]] = row
print()
for group, rows in by_group.items():
    best = min(rows.values(), key=lambda r: r["rmse"])
    print(f"{group}: lowest RMSE from {best['algorithm']} ({best['rmse']:.3f})")
