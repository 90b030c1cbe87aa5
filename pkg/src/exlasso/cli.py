"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import baselines, io
from .diagnostics import equicorrelation_set, kkt_residual, prop1_refit, prop2_reconstruct
from .errors import (
    DataFileError,
    DimensionMismatch,
    ExclusiveLassoError,
    InvalidPartition,
    ReplicateError,
)
from .model import Problem, standardize_columns
from .prox import prox_exclusive
from .selection import select_lambda
from .solver import SolverConfig, fit, fit_path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def parse_grid(spec):
    """``"max:min:count:log"`` (or ``lin``) to a strictly descending array; ``"auto"`` gives None."""
    if spec is None or spec == "auto":
        return None
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise UsageError(f"grid {spec!r} must look like max:min:count[:log|lin]")
    try:
        hi, lo, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"grid {spec!r} has non-numeric fields") from None
    scale = parts[3] if len(parts) == 4 else "log"
    if scale not in ("log", "lin"):
        raise UsageError(f"grid scale must be 'log' or 'lin', got {scale!r}")
    hi, lo = max(hi, lo), min(hi, lo)
    if count < 1 or lo <= 0 or not np.isfinite(hi):
        raise UsageError("grid needs positive finite bounds and count >= 1")
    if count == 1:
        return np.array([hi])
    if hi == lo:
        raise UsageError("grid bounds must differ when count > 1")
    return np.geomspace(hi, lo, count) if scale == "log" else np.linspace(hi, lo, count)


def _on_off(v):
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


def _add_data(p, response=True):
    p.add_argument("--design", required=True, help="design matrix CSV (n rows, p columns)")
    if response:
        p.add_argument("--response", required=True, help="response CSV (one column or row)")
    p.add_argument("--groups", required=True, help="group file: 'column,group' lines, 1-based")
    p.add_argument("--standardize", action="store_true", help="scale columns to unit variance")


def _add_solver(p):
    p.add_argument("--tol", type=float, default=1e-8, help="outer tolerance on ||b_k - b_{k-1}||")
    p.add_argument("--inner-tol", type=float, default=1e-8, help="initial prox tolerance")
    p.add_argument("--max-iter", type=int, default=100_000)


def _add_output(p, formats=("json", "csv")):
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--format", choices=formats, default=formats[0])


def build_parser():
    parser = _Parser(prog="exlasso", description="Exclusive Lasso fitting and experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit at one lambda")
    _add_data(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _add_solver(p)
    _add_output(p)

    p = sub.add_parser("path", help="fit along a lambda grid")
    _add_data(p)
    p.add_argument("--grid", default="auto", help="'auto' or max:min:count:log")
    p.add_argument("--max-df", type=float, help="stop once the degrees of freedom reach this")
    _add_solver(p)
    _add_output(p)

    p = sub.add_parser("select", help="choose lambda by BIC or EBIC")
    _add_data(p)
    p.add_argument("--grid", default="auto")
    p.add_argument("--max-df", type=float)
    p.add_argument("--criterion", choices=("bic", "ebic"), default="bic")
    p.add_argument("--threshold-groupwise", type=_on_off, default=False, metavar="{on,off}")
    _add_solver(p)
    _add_output(p, ("json",))

    p = sub.add_parser("diagnose", help="KKT report and support characterizations")
    _add_data(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--lambda", dest="lam", type=float)
    src.add_argument("--fit", help="fit JSON written by 'fit'")
    _add_solver(p)
    _add_output(p, ("json",))

    p = sub.add_parser("prox", help="evaluate the proximal operator")
    p.add_argument("--point", required=True, help="CSV vector z")
    p.add_argument("--groups", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-sweeps", type=int, default=10_000)
    _add_output(p)

    p = sub.add_parser("baseline", help="run a comparison selector")
    _add_data(p)
    p.add_argument("--method", choices=baselines.METHODS, required=True)
    p.add_argument("--k", type=int, help="number of variables (default: number of groups)")
    _add_solver(p)
    _add_output(p, ("json",))

    p = sub.add_parser("simulate", help="run a simulation scenario")
    p.add_argument("--scenario", choices=("one_per_group", "multi_per_group", "shifted"),
                   default="one_per_group")
    p.add_argument("--spec", help="scenario spec JSON (overrides the defaults)")
    p.add_argument("--replicates", type=int)
    p.add_argument("--w", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1, help="replicates run on this many threads")
    _add_solver(p)
    _add_output(p)

    p = sub.add_parser("dfcheck", help="Monte-Carlo degrees-of-freedom sweep")
    p.add_argument("--B", type=int, default=2000, help="Monte-Carlo draws")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--design-seed", type=int, default=0)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--group-sizes", default="5,5,5,5")
    p.add_argument("--n-lambdas", type=int, default=15)
    p.add_argument("--estimator", choices=("centered", "plugin"), default="centered")
    _add_solver(p)
    _add_output(p, ("csv", "json"))
    return parser


def _config(args):
    if args.tol <= 0 or args.inner_tol <= 0 or args.max_iter < 1:
        raise UsageError("tolerances must be positive and --max-iter at least 1")
    return SolverConfig(tol=args.tol, inner_tol=args.inner_tol, max_iter=args.max_iter)


def _check_files(*paths):
    for path in paths:
        if path is not None and (not Path(path).exists() or Path(path).is_dir()):
            raise DataFileError("file not found", path)


def _load_problem(args, response=True):
    _check_files(args.design, getattr(args, "response", None), args.groups)
    X = io.read_csv_matrix(args.design)
    y = io.read_csv_vector(args.response) if response else np.zeros(X.shape[0])
    if y.shape[0] != X.shape[0]:
        raise DataFileError(f"response has {y.shape[0]} entries, design has {X.shape[0]} rows",
                            args.response)
    part = io.read_groups(args.groups, X.shape[1])
    prob = Problem(X, y, part)
    return standardize_columns(prob) if args.standardize else prob


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_rows(args, rows, columns=None):
    if args.out:
        io.write_csv(args.out, rows, columns)
    else:
        io.write_csv_stream(sys.stdout, rows, columns)


def _coef_rows(beta):
    return [{"index": i + 1, "coefficient": float(b)} for i, b in enumerate(beta)]


def cmd_fit(args):
    prob = _load_problem(args)
    f = fit(prob, args.lam, _config(args))
    if args.format == "csv":
        _emit_rows(args, _coef_rows(f.beta))
    else:
        _emit(args, io.dumps(io.fit_to_dict(f)))


def _path_rows(path):
    rows = []
    for lam, f, d, b, e in zip(path.lambdas, path.fits, path.df, path.bic, path.ebic):
        row = {"lambda": lam, "df": d, "bic": b, "ebic": e, "n_active": int(f.support.size),
               "kkt_residual": f.kkt_residual}
        row.update({f"beta_{i + 1}": v for i, v in enumerate(f.beta)})
        rows.append(row)
    return rows


def cmd_path(args):
    prob = _load_problem(args)
    grid = parse_grid(args.grid)
    path = fit_path(prob, grid, _config(args), max_df=args.max_df)
    if args.format == "csv":
        _emit_rows(args, _path_rows(path))
    else:
        _emit(args, io.dumps({
            "lambdas": path.lambdas, "df": path.df, "bic": path.bic, "ebic": path.ebic,
            "fits": [io.fit_to_dict(f) for f in path.fits],
        }))


def cmd_select(args):
    prob = _load_problem(args)
    path = fit_path(prob, parse_grid(args.grid), _config(args), max_df=args.max_df)
    sel = select_lambda(path, args.criterion, prob.partition, threshold=args.threshold_groupwise)
    _emit(args, io.dumps(sel.to_dict()))


def cmd_diagnose(args):
    prob = _load_problem(args)
    if args.fit:
        _check_files(args.fit)
        f = io.fit_from_dict(io.read_json(args.fit))
        if f.beta.shape != (prob.p,):
            raise DataFileError(f"fit has {f.beta.size} coefficients, design has {prob.p}",
                                args.fit)
    else:
        f = fit(prob, args.lam, _config(args))
    out = {"lambda": f.lam, "kkt": kkt_residual(prob, f).to_dict()}
    if f.support.size:
        refit = prop1_refit(prob, f.support, np.sign(f.beta[f.support]), f.lam)
        out["support_refit_max_abs_diff"] = float(np.max(np.abs(refit - f.beta)))
        eq = equicorrelation_set(prob, f)
        out["equicorrelation_set"] = eq.indices
        try:
            rec = prop2_reconstruct(prob, f)
            out["equicorrelation_reconstruction_max_abs_diff"] = float(
                np.max(np.abs(rec[eq.indices] - f.beta[eq.indices]), initial=0.0))
        except ExclusiveLassoError as exc:
            out["equicorrelation_reconstruction_error"] = str(exc)
    _emit(args, io.dumps(out))


def cmd_prox(args):
    _check_files(args.point, args.groups)
    z = io.read_csv_vector(args.point)
    part = io.read_groups(args.groups, z.shape[0])
    res = prox_exclusive(z, args.lam, part, args.tol, args.max_sweeps)
    if args.format == "csv":
        _emit_rows(args, _coef_rows(res.minimizer))
    else:
        _emit(args, io.dumps({
            "lambda": args.lam, "minimizer": res.minimizer, "sweeps": res.sweeps,
            "final_change": res.final_change, "max_sweeps_hit": res.max_sweeps_hit,
        }))


def cmd_baseline(args):
    prob = _load_problem(args)
    model = baselines.run_baseline(prob, args.method, args.k, _config(args))
    _emit(args, io.dumps(model.to_dict()))


def cmd_simulate(args):
    from .sim import nmr, scenarios

    overrides = {} if args.spec is None else _read_spec(args.spec)
    for key in ("replicates", "w", "b", "seed"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    config = _config(args)
    try:
        if args.scenario == "shifted":
            overrides.pop("w", None)
            overrides.pop("b", None)
            spec = nmr.ShiftedDictionarySpec.from_dict(overrides)
            report = nmr.run_shifted_dictionary(spec, config=config, n_jobs=args.jobs)
        elif args.scenario == "one_per_group":
            spec = scenarios.ScenarioSpec.from_dict(overrides)
            report = scenarios.run_scenario_one_per_group(spec, config=config, n_jobs=args.jobs)
        else:
            overrides.setdefault("true_per_group", [1, 1, 1, 2, 2])
            spec = scenarios.ScenarioSpec.from_dict(overrides)
            report = scenarios.run_scenario_multi_per_group(spec, config=config,
                                                            n_jobs=args.jobs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ExclusiveLassoError):
            raise
        raise UsageError(f"invalid scenario settings: {exc}") from exc
    if args.format == "csv":
        _emit_rows(args, report.summary_rows())
    else:
        _emit(args, io.dumps(report.to_dict()))


def _read_spec(path):
    _check_files(path)
    d = io.read_json(path)
    if not isinstance(d, dict):
        raise DataFileError("scenario spec must be a JSON object", path)
    return d


def cmd_dfcheck(args):
    from .sim.dof import DfSweepDesign, df_sweep

    try:
        sizes = tuple(int(s) for s in args.group_sizes.split(","))
        design = DfSweepDesign(n=args.n, group_sizes=sizes, n_lambdas=args.n_lambdas,
                               seed=args.design_seed)
    except ValueError as exc:
        raise UsageError(f"invalid df sweep settings: {exc}") from exc
    if args.B < 2:
        raise UsageError("--B must be at least 2")
    res = df_sweep(design, args.B, args.seed, _config(args), args.estimator)
    rows = res.rows()
    for row, ok in zip(rows, res.within()):
        row["within_3se"] = bool(ok)
    if args.format == "csv":
        _emit_rows(args, rows)
    else:
        _emit(args, io.dumps({"draws": res.draws, "rows": rows}))


COMMANDS = {
    "fit": cmd_fit, "path": cmd_path, "select": cmd_select, "diagnose": cmd_diagnose,
    "prox": cmd_prox, "baseline": cmd_baseline, "simulate": cmd_simulate,
    "dfcheck": cmd_dfcheck,
}

_DATA_ERRORS = (DataFileError, InvalidPartition, DimensionMismatch)


def _classify(exc):
    cause = exc
    while isinstance(cause, ReplicateError) or type(cause).__name__ == "PathFitError":
        cause = cause.cause
    if isinstance(cause, _DATA_ERRORS):
        return EXIT_DATA
    return EXIT_NUMERIC


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ExclusiveLassoError as exc:
        print(f"exlasso: error: {exc}", file=sys.stderr)
        return _classify(exc)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"exlasso: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # argument values the library rejects (negative lambda and the like)
        print(f"exlasso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def dispatch(argv):
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
