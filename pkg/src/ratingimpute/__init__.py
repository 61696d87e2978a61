"""Imputation of missing ordinal ratings by weighted discordance minimisation."""

__version__ = "0.1.0"

from .consensus import (PairTestReport, UTestResult, WeightMatrix, build_weights,
                        kendall_tau_b, mann_whitney_missingness, mann_whitney_u,
                        pair_report, select_columns)
from .data import (ColumnScale, ConversionSpec, MissingIndex, RatingMatrix, column_scales,
                   convert_scores, denormalize, load_csv, normalize, round_clamp, save_csv,
                   summarize)
from .dqp import closed_form_entry, corner_set, entry_objective, impute_dqp_svas
from .estimatability import (EstimatabilityReport, RPGraph, closure_levels, is_estimatable,
                             is_level1, rp_graph, submatrix_blocks)
from .evaluation import (EvalReport, FoldInstance, impute_baseline, kendall_delta, make_folds,
                         run_experiment, score)
from .exceptions import *  # noqa: F401,F403
from .multiple import MIResult, impute_mi
from .qp import (LinearSystem, assemble_system, impute_per_component, impute_qp_as,
                 objective_value, solve_system)
from .result import ImputationResult
from .synthetic import (SynthInstance, SynthSpec, appendix_c_tables, connectivity_probability,
                        edge_probability, generate, random_correlation)
