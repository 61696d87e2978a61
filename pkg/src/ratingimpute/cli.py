"""Command line interface.

Subcommands::

    ratingimpute analyze ratings.csv --out report.json
    ratingimpute impute ratings.csv --algorithm dqp-svas --out imputed.csv
    ratingimpute synth --m 1000 --n 6 --s 0.5 --r 0.3 --seed 7 --out-dir data/
    ratingimpute eval --config experiment.json --out-csv table.csv
    ratingimpute eval --appendix-c --seed 0
    ratingimpute eval --mi dqp-svas --input ratings.csv --seed 0
    ratingimpute select-columns ratings.csv --target GreatSchools --threshold 0.6

Exit codes: 0 success, 1 usage or configuration, 2 estimatability,
3 resource cap, 4 input/output or parse failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .consensus import build_weights, pair_report, select_columns
from .data import DEFAULT_MISSING_TOKENS, RatingMatrix, load_csv, save_csv, summarize
from .dqp import impute_dqp_svas
from .estimatability import closure_levels
from .evaluation import impute_baseline, run_experiment
from .exceptions import (CapacityError, ConfigError, DegenerateColumnError, DimensionError,
                         EmptyDataError, EstimatabilityError, FoldError, GenerationError,
                         Level1Error, MultipleImputationError, ParseError, SolverError)
from .multiple import impute_mi
from .qp import assemble_system, impute_per_component, impute_qp_as
from .synthetic import EDGE_MODELS, SynthSpec, appendix_c_tables, generate

EXIT_OK, EXIT_USAGE, EXIT_ESTIMATABILITY, EXIT_CAP, EXIT_IO = 0, 1, 2, 3, 4
THREADS_ENV = "RATINGIMPUTE_THREADS"

_EXIT_FOR = [
    (CapacityError, EXIT_CAP),
    ((EstimatabilityError, Level1Error, SolverError, FoldError, MultipleImputationError),
     EXIT_ESTIMATABILITY),
    ((ParseError, EmptyDataError, DegenerateColumnError, OSError), EXIT_IO),
    ((ConfigError, DimensionError, GenerationError, ValueError), EXIT_USAGE),
]


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is reserved here, so use 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return None if math.isnan(o) else float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _load(args) -> RatingMatrix:
    tokens = set(DEFAULT_MISSING_TOKENS)
    if getattr(args, "missing_token", None):
        tokens |= set(args.missing_token)
    M, dropped = load_csv(args.input, tokens, integer_mode=not getattr(args, "continuous", False))
    if dropped:
        print(f"dropped {dropped} rows with no observed rating", file=sys.stderr)
    return M


def cmd_analyze(args):
    M = _load(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = pair_report(M, alpha=args.alpha)
        levels = closure_levels(M)
    out = {
        "summary": summarize(M),
        "consensus": report.to_dict(),
        "estimatability": {
            "is_estimatable": levels.is_estimatable,
            "is_level1": levels.is_level1,
            "dataset_level": levels.dataset_level,
            "level_counts": levels.level_counts(),
            "components": [[M.col_labels[j] for j in c] for c in levels.components],
        },
        "warnings": [str(w.message) for w in caught],
    }
    if args.levels:
        out["estimatability"]["entry_level"] = levels.to_dict()["entry_level"]
    _write_json(out, args.out)
    return EXIT_OK


def _output_paths(out, algorithms):
    out = Path(out)
    if len(algorithms) == 1:
        return {algorithms[0]: out}
    return {a: out.with_name(f"{out.stem}_{a}{out.suffix or '.csv'}") for a in algorithms}


def cmd_impute(args):
    M = _load(args)
    if args.fallback and args.algorithm not in ("dqp-svas", "both"):
        raise ConfigError("--fallback only applies to dqp-svas")
    algorithms = ["qp-as", "dqp-svas"] if args.algorithm == "both" else [args.algorithm]
    integer_mode = not args.continuous
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        W = build_weights(M, args.weights, args.epsilon)
    diagnostics = {"input": str(args.input), "shape": list(M.shape), "n_missing": M.n_missing,
                   "weights": {"mode": args.weights, "epsilon": args.epsilon},
                   "warnings": [str(w.message) for w in caught], "results": {}}
    paths = _output_paths(args.out, algorithms)
    for alg in algorithms:
        if alg == "qp-as":
            kw = dict(integer_mode=integer_mode, dedupe=args.dedupe, max_missing=args.max_missing)
            if args.per_component:
                res = impute_per_component(M, W, impute_qp_as, **kw)
            else:
                res = impute_qp_as(M, W, **kw)
            if args.dump_system:
                L = assemble_system(M, W, dedupe=args.dedupe, max_missing=args.max_missing)
                np.savetxt(f"{args.dump_system}_A.txt", L.A)
                np.savetxt(f"{args.dump_system}_b.txt", L.b)
        elif alg == "dqp-svas":
            if args.per_component:
                res = impute_per_component(M, W, impute_dqp_svas, integer_mode=integer_mode,
                                           fallback=args.fallback)
            else:
                res = impute_dqp_svas(M, W, integer_mode=integer_mode, fallback=args.fallback)
        else:
            res = impute_baseline(M, alg, integer_mode=integer_mode)
        save_csv(res.rounded, paths[alg])
        d = res.to_dict()
        if not args.full:
            d.pop("imputed")
        d["output"] = str(paths[alg])
        diagnostics["results"][alg] = d
        print(f"{alg}: imputed {len(res.index)} cells in {res.wall_time:.3f} s -> {paths[alg]}",
              file=sys.stderr)
    _write_json(diagnostics, args.diagnostics)
    return EXIT_OK


def cmd_synth(args):
    spec = SynthSpec(args.m, args.n, args.s, args.r, args.seed)
    inst = generate(spec)
    paths = inst.save(args.out_dir, args.prefix)
    print(json.dumps({"truth": str(paths[0]), "observed": str(paths[1]),
                      "spec": str(paths[2]), "missing": inst.observed.n_missing,
                      "rescued": len(inst.rescued)}))
    return EXIT_OK


def _load_config(path) -> dict:
    text = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text)


def _float_list(text):
    return [float(v) for v in text.split(",")]


def _int_list(text):
    return [int(v) for v in text.split(",")]


def _eval_appendix_c(args):
    tables = appendix_c_tables(args.trials, args.seed, args.edge_model)
    lines = ["edge connection probability (rows r, columns m)",
             "r\\m    " + "".join(f"{m:>9}" for m in tables["m"])]
    for r, row in zip(tables["r"], tables["p_edge"]):
        lines.append(f"{r:<7}" + "".join(f"{v:>9.4f}" for v in row))
    lines += ["", f"graph connection probability ({args.trials} trials, edge model "
                  f"{args.edge_model}; rows p_edge, columns n)",
              "p\\n    " + "".join(f"{n:>9}" for n in tables["n"])]
    for p, row in zip(tables["p"], tables["p_connect"]):
        lines.append(f"{p:<7}" + "".join(f"{v:>9.4f}" for v in row))
    print("\n".join(lines), file=sys.stderr)
    _write_json(tables, args.out_json)
    return EXIT_OK


def _eval_mi(args):
    if args.input:
        M = _load(args)
    elif args.synthetic:
        m, n, s, r = args.synthetic
        M = generate(SynthSpec(int(m), int(n), s, r, args.seed)).observed
    else:
        raise ConfigError("--mi needs --input or --synthetic")
    res = impute_mi(M, base=args.mi, row_fraction=args.row_fraction,
                    min_coverage=args.min_coverage, rng=args.seed, aggregate=args.aggregate)
    out = res.to_dict(full=args.full)
    out["zero_sd_percent"] = 100.0 * res.zero_sd_fraction
    print(f"{args.mi}-MI: samples={res.sample_count} %ZeroSD={100 * res.zero_sd_fraction:.2f} "
          f"AvgSD={res.avg_sd:.4f}", file=sys.stderr)
    if args.out_csv:
        save_csv(res.aggregated, args.out_csv)
    _write_json(out, args.out_json)
    return EXIT_OK


def cmd_eval(args):
    if args.seed is None and not args.config:
        raise ConfigError("--seed is required for evaluation runs")
    if args.appendix_c:
        return _eval_appendix_c(args)
    if args.mi:
        return _eval_mi(args)
    if args.config:
        config = _load_config(args.config)
    else:
        config = {}
        if args.input:
            config["csv"] = str(args.input)
            config["k"] = args.k
        if args.synthetic_grid:
            config["synthetic"] = {"m": _int_list(args.grid_m), "n": _int_list(args.grid_n),
                                   "s": _float_list(args.grid_s), "r": _float_list(args.grid_r),
                                   "seeds": list(range(args.seeds))}
        config["algorithms"] = args.algorithms.split(",") if args.algorithms else []
    config.setdefault("seed", args.seed)
    if args.fallback:
        config.setdefault("fallback", args.fallback)
    report = run_experiment(config)
    print(report.format_table(), file=sys.stderr)
    if args.out_csv:
        report.write_csv(args.out_csv)
    if args.cells_csv:
        report.write_csv(args.cells_csv, aggregate=False)
    if args.out_json:
        Path(args.out_json).write_text(report.to_json(indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_select_columns(args):
    M = _load(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = pair_report(M)
        picked = select_columns(report, args.target, args.threshold)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    labels = [M.col_labels[j] for j in picked]
    if args.out:
        save_csv(M.take(cols=picked), args.out)
    print(json.dumps({"target": args.target, "threshold": args.threshold, "columns": labels}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ratingimpute", description="Impute missing ordinal ratings by minimising "
                                                 "weighted pairwise discordance.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help=f"cap BLAS threads (default: ${THREADS_ENV} or all cores)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_input(sp, required=True):
        if required:
            sp.add_argument("input", type=Path, help="ratings CSV (first column = subject id)")
        sp.add_argument("--missing-token", action="append", default=[],
                        help="extra token meaning 'missing' (repeatable)")
        sp.add_argument("--continuous", action="store_true",
                        help="treat ratings as real numbers (no rounding)")

    a = sub.add_parser("analyze", help="summary, consensus and estimatability report")
    add_input(a)
    a.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--levels", action="store_true", help="include the per-cell level grid")
    a.set_defaults(func=cmd_analyze)

    im = sub.add_parser("impute", help="fill missing ratings")
    add_input(im)
    im.add_argument("--algorithm", choices=["qp-as", "dqp-svas", "both", "mean", "mode"],
                    default="dqp-svas")
    im.add_argument("--out", required=True, help="imputed CSV ('both' adds _<algorithm> suffixes)")
    im.add_argument("--diagnostics", default=None, help="JSON diagnostics path (default: stdout)")
    im.add_argument("--weights", choices=["kendall", "uniform"], default="kendall")
    im.add_argument("--epsilon", type=float, default=0.01)
    im.add_argument("--dedupe", action="store_true", help="collapse duplicate rows (qp-as)")
    im.add_argument("--fallback", choices=["qp-as"], default=None,
                    help="run qp-as when dqp-svas meets a level-1 violation")
    im.add_argument("--per-component", action="store_true",
                    help="impute each connected provider block separately")
    im.add_argument("--max-missing", type=int, default=20_000, help="qp-as size cap")
    im.add_argument("--dump-system", default=None, help="write <prefix>_A.txt and <prefix>_b.txt")
    im.add_argument("--full", action="store_true", help="list every imputed cell in diagnostics")
    im.set_defaults(func=cmd_impute)

    sy = sub.add_parser("synth", help="generate a synthetic instance")
    sy.add_argument("--m", type=int, required=True)
    sy.add_argument("--n", type=int, required=True)
    sy.add_argument("--s", type=float, required=True, help="input correlation")
    sy.add_argument("--r", type=float, required=True, help="missing rate")
    sy.add_argument("--seed", type=int, required=True)
    sy.add_argument("--out-dir", type=Path, default=Path("."))
    sy.add_argument("--prefix", default="synth")
    sy.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="benchmarks, estimatability tables, multiple imputation")
    add_input(ev, required=False)
    ev.add_argument("--input", type=Path, default=None, help="CSV for fold evaluation or --mi")
    ev.add_argument("--config", type=Path, default=None, help="JSON or TOML experiment config")
    ev.add_argument("--algorithms", default=None, help="comma list of qp-as,dqp-svas,mean,mode")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--k", type=int, default=10, help="number of folds")
    ev.add_argument("--synthetic-grid", action="store_true", help="use --grid-* values")
    ev.add_argument("--grid-m", default="500")
    ev.add_argument("--grid-n", default="6")
    ev.add_argument("--grid-s", default="0.3,0.5,0.7")
    ev.add_argument("--grid-r", default="0.3")
    ev.add_argument("--seeds", type=int, default=10, help="instances per grid point")
    ev.add_argument("--fallback", choices=["qp-as"], default=None)
    ev.add_argument("--out-csv", default=None, help="aggregate table CSV")
    ev.add_argument("--cells-csv", default=None, help="per-instance CSV")
    ev.add_argument("--out-json", default=None)
    ev.add_argument("--appendix-c", action="store_true",
                    help="edge and graph connection probability tables")
    ev.add_argument("--trials", type=int, default=10_000)
    ev.add_argument("--edge-model", choices=EDGE_MODELS, default="ordered-pairs")
    ev.add_argument("--mi", choices=["qp-as", "dqp-svas"], default=None,
                    help="multiple-imputation stability run")
    ev.add_argument("--synthetic", type=float, nargs=4, metavar=("M", "N", "S", "R"),
                    help="synthetic instance for --mi")
    ev.add_argument("--row-fraction", type=float, default=0.8)
    ev.add_argument("--min-coverage", type=int, default=10)
    ev.add_argument("--aggregate", choices=["mean", "mode"], default="mean")
    ev.add_argument("--full", action="store_true", help="per-entry MI samples in JSON")
    ev.set_defaults(func=cmd_eval)

    sc = sub.add_parser("select-columns", help="target column plus well-correlated providers")
    add_input(sc)
    sc.add_argument("--target", required=True)
    sc.add_argument("--threshold", type=float, required=True)
    sc.add_argument("--out", default=None, help="write the selected columns as CSV")
    sc.set_defaults(func=cmd_select_columns)
    return p


def _exit_code(exc) -> int:
    for types, code in _EXIT_FOR:
        if isinstance(exc, types):
            return code
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        threads = int(os.environ[THREADS_ENV])
    try:
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads must be positive")
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = _exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, CapacityError):
            print("hint: use --algorithm dqp-svas for large problems", file=sys.stderr)
        if isinstance(exc, EstimatabilityError):
            print("hint: --per-component imputes each block separately", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
