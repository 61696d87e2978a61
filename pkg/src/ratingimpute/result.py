"""Container returned by every imputer."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import ColumnScale, MissingIndex, RatingMatrix, round_clamp, save_csv


@dataclass(frozen=True)
class ImputationResult:
    """Imputed values for the missing cells of ``source``.

    ``continuous`` is aligned with ``index`` and is on the original rating
    scale. ``rounded`` is the completed matrix after rounding and clamping
    (or the continuous fill when integer mode is off).
    """

    source: RatingMatrix
    index: MissingIndex
    continuous: np.ndarray
    rounded: RatingMatrix
    algorithm: str
    objective_value: float = float("nan")
    residual_norm: float = 0.0
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def filled(self) -> RatingMatrix:
        """Source matrix with the continuous imputations written in."""
        values = np.array(self.source.values)
        values[self.index.rows, self.index.cols] = self.continuous
        return self.source.with_values(values, integer_mode=False)

    def value_at(self, i: int, j: int) -> float:
        return float(self.continuous[self.index.position(i, j)])

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "objective_value": self.objective_value,
            "residual_norm": self.residual_norm,
            "wall_time": self.wall_time,
            "n_missing": len(self.index),
            "imputed": [{"row": self.source.row_labels[i], "col": self.source.col_labels[j],
                         "continuous": float(v), "rounded": float(self.rounded.values[i, j])}
                        for (i, j), v in zip(self.index, self.continuous)],
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def write_csv(self, path, missing_token="NA"):
        save_csv(self.rounded, path, missing_token=missing_token)


def finish(source, index, continuous, scale: ColumnScale, integer_mode, algorithm, **extra):
    """Write imputations into ``source`` and apply rounding when asked."""
    values = np.array(source.values)
    if len(index):
        filled = round_clamp(continuous, scale, index.cols) if integer_mode else continuous
        values[index.rows, index.cols] = filled
    rounded = source.with_values(values, integer_mode=bool(integer_mode and source.integer_mode))
    return ImputationResult(source, index, np.asarray(continuous, dtype=float), rounded,
                            algorithm, **extra)
