"""Command-line front end: fit, predict, select-sources, energy, simulate,
coverage.

All commands are reproducible: the seed defaults to 42 (overridable via
the GI_SEED environment variable or --seed), outputs are written
atomically (temp file plus rename, never a partial file), numbers are
formatted at 17 significant digits, and every file output gets a JSON
sidecar recording the resolved configuration.

Exit codes: 0 success, 1 input/IO error, 2 identifiability failure,
3 degenerate covariance, 4 ellipsoid violation in strict mode,
5 source selection infeasible, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .asymptotics import (
    ranking_to_dict,
    select_sources,
)
from .data import load_covariate_csv, load_csv
from .errors import (
    DegenerateCovariatesError,
    EllipsoidViolationError,
    EmptyInputError,
    IdentifiabilityError,
    InsufficientTestSampleError,
    NotEnoughSourcesError,
    ParseError,
    SchemaError,
    SelectionInfeasibleError,
    SingularCovarianceError,
)
from .estimator import DEFAULT_RANK_TOL, fit, fit_from_dict, fit_to_dict
from .evaluation import energy_matrix
from .generator import build_generator, generate_responses
from .simulation import (
    SimulationConfig,
    coverage_study,
    energy_benchmark,
    simulate_multienv,
)

DEFAULT_SEED = 42

EXIT_OK = 0
EXIT_IO = 1
EXIT_IDENTIFIABILITY = 2
EXIT_DEGENERATE = 3
EXIT_ELLIPSOID = 4
EXIT_SELECTION = 5
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems via a catchable error."""

    def error(self, message):
        raise _UsageError(message)


def _fnum(v) -> str:
    return format(float(v), ".17g")


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gi-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.output:
        _write_atomic(args.output, text)
        _write_sidecar(args)
    else:
        sys.stdout.write(text)


def _write_sidecar(args) -> None:
    resolved = {k: v for k, v in vars(args).items()
                if k != "func" and not k.startswith("_")}
    sidecar = {"version": __version__, "config": resolved}
    _write_atomic(args.output + ".config.json",
                  json.dumps(sidecar, indent=2, default=str) + "\n")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"GI_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _covariates(args) -> list[str]:
    cols = [c.strip() for c in args.covariates.split(",") if c.strip()]
    if not cols:
        raise _UsageError("--covariates must name at least one column")
    return cols


def _vector(text: str, flag: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise _UsageError(f"{flag} must be a comma-separated list of numbers") \
            from None


def _csv_table(header: list[str], rows: list[list[str]],
               comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(",".join(header))
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    d = load_csv(args.input, args.response, args.env, _covariates(args),
                 add_intercept=args.intercept)
    fitted = fit(d, rank_tol=args.rank_tol)
    payload = fit_to_dict(fitted)
    payload["columns"] = {"response": args.response, "env": args.env,
                          "covariates": _covariates(args)}
    payload["version"] = __version__
    _emit(args, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        payload = json.load(fh)
    fitted = fit_from_dict(payload)
    columns = payload.get("columns", {})
    names = (_covariates(args) if args.covariates
             else columns.get("covariates"))
    if not names:
        raise _UsageError("test covariate columns unknown: pass --covariates "
                          "or use a fit file that records them")
    x_test = load_covariate_csv(args.test, names,
                                add_intercept=fitted.intercept)
    seed = _resolve_seed(args)
    spec = build_generator(fitted, x_test, strict=args.strict)
    y = generate_responses(spec, x_test, seed)

    shown = x_test[:, 1:] if fitted.intercept else x_test
    if args.format == "json":
        out = {"seed": seed, "columns": names,
               "covariates": shown.tolist(), "y_generated": y.tolist()}
        _emit(args, json.dumps(out, indent=2) + "\n")
    else:
        rows = [[str(i), *(_fnum(v) for v in shown[i]), _fnum(y[i])]
                for i in range(len(y))]
        _emit(args, _csv_table(["index", *names, "y_generated"], rows,
                               comment=f"seed={seed}"))
    return EXIT_OK


def cmd_select_sources(args) -> int:
    d = load_csv(args.input, args.response, args.env, _covariates(args),
                 add_intercept=args.intercept)
    ranking = select_sources(d, split_seed=args.split_seed, top_b=args.top_b,
                             rank_tol=args.rank_tol, max_workers=args.threads)
    header = ["rank", "combo", "det_score", "key"]
    rows = [[str(i + 1),
             "+".join(d.labels[z - 1] for z in combo),
             _fnum(ranking.det_scores[i]),
             _fnum(ranking.keys[i])]
            for i, combo in enumerate(ranking.combos)]
    if args.format == "json":
        out = ranking_to_dict(ranking)
        out["labels"] = list(d.labels)
        _emit(args, json.dumps(out, indent=2) + "\n")
    else:
        _emit(args, _csv_table(header, rows))
    if args.output:
        width = max(len(r[1]) for r in rows)
        print("rank  combo".ljust(8 + width) + "  det_score  key")
        for r in rows:
            print(f"{r[0]:>4}  {r[1]:<{width}}  {r[2]}  {r[3]}")
    return EXIT_OK


def cmd_energy(args) -> int:
    d = load_csv(args.input, args.response, args.env, _covariates(args),
                 add_intercept=False)
    matrix = energy_matrix(d, covariates_only=not args.include_response)
    header = ["env", *d.labels]
    rows = [[d.labels[i], *(_fnum(v) for v in matrix[i])]
            for i in range(d.n_envs)]
    _emit(args, _csv_table(header, rows))
    return EXIT_OK


def _simulation_config(args, seed: int) -> SimulationConfig:
    beta = _vector(args.beta_star, "--beta-star")
    k = _vector(args.k_star, "--k-star")
    return SimulationConfig(
        p=beta.size, z_envs=args.z, n_per_env=(args.n,) * args.z,
        beta_star=beta, k_star=k, s1=args.s1, s2=args.s2,
        intercept=args.intercept, seed=seed)


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    if args.mode == "sweep":
        cfg = _simulation_config(args, seed)
        grid = _vector(args.s_grid, "--s-grid")
        result = energy_benchmark(cfg, grid, replicates=args.replicates,
                                  seed=seed)
        header = ["s", "gi", "ols", "causal"]
        rows = [[_fnum(s), *(_fnum(result.scores[m][i])
                             for m in ("gi", "ols", "causal"))]
                for i, s in enumerate(result.grid)]
        _emit(args, _csv_table(header, rows))
        return EXIT_OK

    cfg = _simulation_config(args, seed)
    data, _ = simulate_multienv(cfg)
    shown = data.x[:, 1:] if cfg.intercept else data.x
    names = [f"x{j + 1}" for j in range(shown.shape[1])]
    header = ["env", *names, "y"]
    rows = [[data.labels[data.env[i] - 1],
             *(_fnum(v) for v in shown[i]), _fnum(data.y[i])]
            for i in range(data.n)]
    _emit(args, _csv_table(header, rows))
    return EXIT_OK


def cmd_coverage(args) -> int:
    seed = _resolve_seed(args)
    cfg = _simulation_config(args, seed)
    result = coverage_study(cfg, replicates=args.replicates,
                            level=args.level, seed=seed)
    header = ["coordinate", "beta_star", "coverage", "mean_ci_width"]
    rows = [[str(j + 1), _fnum(cfg.beta_star[j]), _fnum(result.coverage[j]),
             _fnum(result.mean_ci_width[j])]
            for j in range(cfg.p)]
    _emit(args, _csv_table(header, rows))
    return EXIT_OK


def _add_io_flags(sub, with_test=False):
    sub.add_argument("--input", required=True, help="input file")
    if with_test:
        sub.add_argument("--test", required=True,
                         help="test covariate CSV file")
    sub.add_argument("--output", default=None,
                     help="output file (stdout when omitted)")
    sub.add_argument("--format", choices=("csv", "json"), default=None)


def _add_column_flags(sub):
    sub.add_argument("--response", required=True, help="response column name")
    sub.add_argument("--env", required=True, help="environment column name")
    sub.add_argument("--covariates", required=True,
                     help="comma-separated covariate column names")
    sub.add_argument("--intercept", action="store_true",
                     help="prepend an all-ones intercept column")


def _add_sim_flags(sub):
    sub.add_argument("--z", type=int, default=2, help="number of sources")
    sub.add_argument("--n", type=int, default=200, help="rows per source")
    sub.add_argument("--beta-star", default="1.0",
                     help="true coefficients, comma separated")
    sub.add_argument("--k-star", default="1.0",
                     help="true confounding covariance, comma separated")
    sub.add_argument("--s1", type=float, default=1.0,
                     help="covariance heterogeneity scale")
    sub.add_argument("--s2", type=float, default=1.0,
                     help="mean heterogeneity scale")
    sub.add_argument("--intercept", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gi",
                     description="Prediction under hidden confounding: "
                                 "closed-form fitting, generative prediction, "
                                 "source selection and simulation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the estimators on a training CSV")
    _add_io_flags(p_fit)
    _add_column_flags(p_fit)
    p_fit.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict",
                            help="generate responses for test covariates "
                                 "from a fit JSON")
    _add_io_flags(p_pred, with_test=True)
    p_pred.add_argument("--covariates", default=None,
                        help="override covariate columns recorded in the fit")
    p_pred.add_argument("--seed", type=int, default=None)
    p_pred.add_argument("--strict", action="store_true",
                        help="error instead of truncating a negative "
                             "noise variance")
    p_pred.set_defaults(func=cmd_predict)

    p_sel = sub.add_parser("select-sources",
                           help="rank source combinations by efficiency")
    _add_io_flags(p_sel)
    _add_column_flags(p_sel)
    p_sel.add_argument("--split-seed", type=int, default=DEFAULT_SEED)
    p_sel.add_argument("--top-b", type=int, default=100)
    p_sel.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
    p_sel.add_argument("--threads", type=int, default=1,
                       help="cap on concurrent per-combination fits")
    p_sel.set_defaults(func=cmd_select_sources)

    p_energy = sub.add_parser("energy",
                              help="energy-distance matrix across sources")
    _add_io_flags(p_energy)
    p_energy.add_argument("--response", default=None,
                          help="response column (only used with "
                               "--include-response)")
    p_energy.add_argument("--env", required=True)
    p_energy.add_argument("--covariates", required=True)
    p_energy.add_argument("--include-response", action="store_true",
                          help="compare joint (covariates, response) samples")
    p_energy.set_defaults(func=cmd_energy)

    p_sim = sub.add_parser("simulate",
                           help="seeded simulations: multi-source dataset "
                                "or shift-strength sweep")
    _add_io_flags(p_sim)
    p_sim.add_argument("--mode", choices=("multienv", "sweep"),
                       default="multienv")
    _add_sim_flags(p_sim)
    p_sim.add_argument("--s-grid", default="0.5,2,10,100",
                       help="shift strengths for sweep mode")
    p_sim.add_argument("--replicates", type=int, default=50)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_cov = sub.add_parser("coverage",
                           help="confidence-interval coverage study")
    _add_io_flags(p_cov)
    _add_sim_flags(p_cov)
    p_cov.add_argument("--replicates", type=int, default=200)
    p_cov.add_argument("--level", type=float, default=0.95)
    p_cov.add_argument("--seed", type=int, default=None)
    p_cov.set_defaults(func=cmd_coverage)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SchemaError, ParseError, EmptyInputError,
            InsufficientTestSampleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IdentifiabilityError as exc:
        print(f"identifiability failure: {exc}", file=sys.stderr)
        if exc.report is not None:
            eigs = ", ".join(_fnum(v) for v in exc.report.eigenvalues)
            print(f"eigenvalues: {eigs}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except (DegenerateCovariatesError, SingularCovarianceError) as exc:
        print(f"degenerate covariance: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except EllipsoidViolationError as exc:
        print(f"ellipsoid violation: {exc}", file=sys.stderr)
        return EXIT_ELLIPSOID
    except (SelectionInfeasibleError, NotEnoughSourcesError) as exc:
        print(f"selection infeasible: {exc}", file=sys.stderr)
        return EXIT_SELECTION


def run() -> None:
    sys.exit(main(sys.argv[1:]))
