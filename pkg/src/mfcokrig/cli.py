"""Command-line entry point.

Subcommands: ``fit``, ``predict``, ``sample``, ``benchmark``, ``tailprobe``.
Configuration comes from an optional JSON file (``--config``) overridden by
flags; every run echoes its resolved configuration into the output
directory so results are reproducible from the artifacts alone.

Exit codes: 0 success, 2 configuration or validation failure, 3 numerical
or estimation failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .bench import run_borehole_benchmark
from .estimate import OptimOptions, assemble, fit
from .exceptions import (
    BenchmarkError,
    ConfigError,
    DegenerateDataError,
    DesignRankError,
    DomainError,
    DuplicateRowError,
    EstimationError,
    InvalidArgumentError,
    NestingError,
    PriorEvaluationError,
    SingularCorrelationError,
    VarianceUndefinedError,
)
from .gp import tail_probe
from .kernels import KernelSpec, RangeParams
from .modelio import (
    dump_json,
    load_level_csv,
    load_model,
    save_model,
    write_draws_csv,
    write_predictions_csv,
    write_replicates_csv,
    write_tailprobe_csv,
)
from .predict import CokrigingModel
from .priors import PRIOR_KINDS, PriorSpec, log_prior

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATION = 3

_VALIDATION_ERRORS = (
    ConfigError,
    InvalidArgumentError,
    DomainError,
    NestingError,
    DuplicateRowError,
    OSError,
)
_NUMERICAL_ERRORS = (
    EstimationError,
    SingularCorrelationError,
    DegenerateDataError,
    DesignRankError,
    PriorEvaluationError,
    BenchmarkError,
    VarianceUndefinedError,
)

_CONFIG_KEYS = {
    "levels",
    "grid",
    "kernel",
    "prior",
    "optimizer",
    "method",
    "out",
    "benchmark",
}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path} ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(
            f"unknown config keys: {sorted(unknown)}; expected {sorted(_CONFIG_KEYS)}"
        )
    return cfg


def _build_kernel(cfg, args, dims):
    kcfg = dict(cfg.get("kernel", {}))
    if getattr(args, "kernel", None) is not None:
        kcfg["family"] = args.kernel
    if getattr(args, "shape", None) is not None:
        kcfg["shape"] = args.shape
    if getattr(args, "nugget", None) is not None:
        kcfg["nugget"] = args.nugget
    kcfg.setdefault("family", "power_exponential")
    kcfg["dims"] = dims
    kcfg.setdefault("shape", None)
    kcfg.setdefault("nugget", 1e-10)
    return KernelSpec(
        family=kcfg["family"],
        shape=kcfg["shape"],
        dims=kcfg["dims"],
        nugget=kcfg["nugget"],
    )


def _build_prior(cfg, args):
    pcfg = dict(cfg.get("prior", {}))
    if getattr(args, "prior", None) is not None:
        pcfg["kind"] = args.prior
    if getattr(args, "jr_a0", None) is not None:
        pcfg["jr_a0"] = args.jr_a0
    if getattr(args, "jr_b0", None) is not None:
        pcfg["jr_b0"] = args.jr_b0
    pcfg.setdefault("kind", "reference")
    return PriorSpec(
        kind=pcfg["kind"],
        jr_a0=pcfg.get("jr_a0"),
        jr_b0=pcfg.get("jr_b0", 1.0),
        jr_C=pcfg.get("jr_C"),
    )


def _build_opts(cfg, args):
    ocfg = dict(cfg.get("optimizer", {}))
    if getattr(args, "seed", None) is not None:
        ocfg["seed"] = args.seed
    if getattr(args, "starts", None) is not None:
        ocfg["n_starts"] = args.starts
    ocfg.setdefault("seed", 0)
    return OptimOptions(
        seed=ocfg["seed"],
        n_starts=ocfg.get("n_starts", 8),
        tol=ocfg.get("tol", 1e-8),
        max_evals=ocfg.get("max_evals"),
        start_low=ocfg.get("start_low", -3.0),
        start_high=ocfg.get("start_high", 3.0),
        initial_step=ocfg.get("initial_step", 0.5),
    )


def _resolve_out(cfg, args):
    out = getattr(args, "out", None) or cfg.get("out") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_levels(cfg, args):
    paths = list(getattr(args, "level", None) or cfg.get("levels") or [])
    if not paths:
        raise ConfigError("no level data given; pass --level or config 'levels'")
    raw = [load_level_csv(p) for p in paths]
    d = raw[0][0].shape[1]
    for p, (X, _) in zip(paths, raw):
        if X.shape[1] != d:
            raise ConfigError(
                f"{p} has {X.shape[1]} input columns but the first level has {d}"
            )
    return paths, raw


def _echo_config(out, name, payload):
    dump_json(payload, os.path.join(out, f"{name}_config.json"))


def cmd_fit(args):
    cfg = _load_config(args.config)
    out = _resolve_out(cfg, args)
    paths, raw = _load_levels(cfg, args)
    dims = raw[0][0].shape[1]
    spec = _build_kernel(cfg, args, dims)
    prior = _build_prior(cfg, args)
    opts = _build_opts(cfg, args)
    method = args.method or cfg.get("method", "posterior")
    data = assemble(raw)
    result = fit(data, spec, prior, opts, method=method)
    model_path = os.path.join(out, "model.json")
    save_model(model_path, data, result)
    _echo_config(
        out,
        "fit",
        {
            "levels": paths,
            "kernel": spec.to_dict(),
            "prior": prior.to_dict(),
            "optimizer": opts.to_dict(),
            "method": method,
        },
    )
    lines = [
        f"fitted {data.s}-level model ({method}, prior={prior.kind}, "
        f"kernel={spec.family})"
    ]
    for lf in result.levels:
        phi_txt = ", ".join(f"{v:.6g}" for v in lf.phi)
        lines.append(
            f"level {lf.level}: n={data.levels[lf.level - 1].n} "
            f"phi=({phi_txt}) sigma2={lf.sigma2_hat:.6g} "
            f"objective={lf.objective_value:.6g} converged={lf.converged}"
        )
        if lf.gamma is not None:
            lines[-1] += f" gamma={lf.gamma:.6g}"
    summary = "\n".join(lines) + "\n"
    with open(os.path.join(out, "fit_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary)
    sys.stdout.write(summary)
    sys.stdout.write(f"model written to {model_path}\n")
    return EXIT_OK


def cmd_predict(args):
    cfg = _load_config(args.config)
    out = _resolve_out(cfg, args)
    grid_path = args.grid or cfg.get("grid")
    if grid_path is None:
        raise ConfigError("no prediction grid given; pass --grid or config 'grid'")
    data, result = load_model(args.model)
    model = CokrigingModel(data, result)
    X0, _ = _load_grid(grid_path, data.dims)
    pred = model.predict(X0)
    seed = args.seed if args.seed is not None else 0
    intervals = []
    for i in range(X0.shape[0]):
        per_level = []
        draws = None
        for t in range(1, data.s + 1):
            if t == 1:
                per_level.append(
                    model.credible_interval(
                        X0[i], level=1, prob=0.95, n_draws=args.draws, seed=seed + i
                    )
                )
            else:
                if draws is None:
                    draws = model.sample_predictive(X0[i], args.draws, seed=seed + i)
                lo, hi = np.quantile(draws[:, t - 1], [0.025, 0.975])
                per_level.append((float(lo), float(hi)))
        intervals.append(per_level)
    pred_path = os.path.join(out, "predictions.csv")
    write_predictions_csv(pred_path, X0, pred, intervals)
    _echo_config(
        out,
        "predict",
        {
            "model": args.model,
            "grid": grid_path,
            "draws": args.draws,
            "seed": seed,
        },
    )
    sys.stdout.write(
        f"predicted {X0.shape[0]} points at {data.s} level(s); wrote {pred_path}\n"
    )
    return EXIT_OK


def _load_grid(path, dims):
    """Read a query grid: either x1..xd,y (y ignored) or x1..xd."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            import csv as _csv

            reader = _csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise ConfigError(f"grid file not found: {path}") from exc
    if header is None:
        raise ConfigError(f"{path} is empty; expected a header row")
    header = [h.strip() for h in header]
    has_y = header[-1] == "y"
    d = len(header) - (1 if has_y else 0)
    if d != dims:
        raise ConfigError(f"{path} has {d} input columns but the model expects {dims}")
    try:
        values = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from exc
    if values.size == 0:
        raise ConfigError(f"{path} contains no data rows")
    X = values[:, :dims]
    y = values[:, dims] if has_y else None
    return X, y


def cmd_sample(args):
    cfg = _load_config(args.config)
    out = _resolve_out(cfg, args)
    data, result = load_model(args.model)
    model = CokrigingModel(data, result)
    try:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    except ValueError as exc:
        raise ConfigError(f"--x0 must be comma-separated floats ({exc})") from exc
    if x0.size != data.dims:
        raise ConfigError(f"--x0 has {x0.size} coordinates, model expects {data.dims}")
    seed = args.seed if args.seed is not None else 0
    draws = model.sample_predictive(x0, args.draws, seed=seed)
    path = os.path.join(out, "draws.csv")
    write_draws_csv(path, draws)
    _echo_config(
        out,
        "sample",
        {"model": args.model, "x0": [float(v) for v in x0], "draws": args.draws, "seed": seed},
    )
    sys.stdout.write(f"wrote {args.draws} joint draws to {path}\n")
    return EXIT_OK


def cmd_benchmark(args):
    cfg = _load_config(args.config)
    out = _resolve_out(cfg, args)
    bcfg = dict(cfg.get("benchmark", {}))
    n_low = args.n_low if args.n_low is not None else bcfg.get("n_low", 80)
    n_high = args.n_high if args.n_high is not None else bcfg.get("n_high", 30)
    n_test = args.n_test if args.n_test is not None else bcfg.get("n_test", 20)
    n_reps = args.reps if args.reps is not None else bcfg.get("n_reps", 10)
    spec = _build_kernel(cfg, args, dims=8)
    prior = _build_prior(cfg, args)
    opts = _build_opts(cfg, args)
    method = args.method or cfg.get("method", "posterior")
    seed = args.seed if args.seed is not None else opts.seed
    report = run_borehole_benchmark(
        n_low=n_low,
        n_high=n_high,
        n_test=n_test,
        prior=prior,
        spec=spec,
        seed=seed,
        n_reps=n_reps,
        method=method,
        opts=opts,
    )
    json_path = os.path.join(out, "benchmark_report.json")
    csv_path = os.path.join(out, "benchmark_replicates.csv")
    dump_json(report.to_dict(), json_path)
    write_replicates_csv(csv_path, report)
    sys.stdout.write(
        f"borehole benchmark ({method}, prior={prior.kind}, kernel={spec.family}, "
        f"{n_reps} replicates): median RMSPE={report.rmspe:.4g} "
        f"CVG95={report.cvg95:.3f} ALCI95={report.alci95:.4g} "
        f"failures={report.n_failed}\n"
    )
    sys.stdout.write(f"report written to {json_path} and {csv_path}\n")
    return EXIT_OK


def cmd_tailprobe(args):
    cfg = _load_config(args.config)
    out = _resolve_out(cfg, args)
    paths, raw = _load_levels(cfg, args)
    dims = raw[0][0].shape[1]
    spec = _build_kernel(cfg, args, dims)
    prior = _build_prior(cfg, args)
    data = assemble(raw)
    if not 1 <= args.level_index <= data.s:
        raise ConfigError(
            f"--level-index must lie in [1, {data.s}], got {args.level_index}"
        )
    lv = data.levels[args.level_index - 1]
    if args.phi_grid:
        try:
            grid = np.array([float(v) for v in args.phi_grid.split(",")])
        except ValueError as exc:
            raise ConfigError(f"--phi-grid must be comma-separated floats ({exc})") from exc
    elif args.n_grid == 0:
        grid = np.empty(0)
    else:
        if args.phi_min <= 0 or args.phi_max <= args.phi_min:
            raise ConfigError("need 0 < --phi-min < --phi-max")
        grid = np.geomspace(args.phi_min, args.phi_max, args.n_grid)
    a_t = prior.a_t(lv.q)
    loglik = tail_probe(lv, spec, a_t, grid)
    logprior = np.empty(grid.size)
    for i, g in enumerate(grid):
        try:
            logprior[i] = log_prior(lv, RangeParams(np.full(lv.dims, g)), spec, prior)
        except (
            SingularCorrelationError,
            PriorEvaluationError,
            DesignRankError,
            InvalidArgumentError,
        ):
            logprior[i] = np.nan
    logpost = loglik + logprior
    path = os.path.join(out, f"tailprobe_level{args.level_index}.csv")
    write_tailprobe_csv(path, grid, loglik, logprior, logpost)
    _echo_config(
        out,
        "tailprobe",
        {
            "levels": paths,
            "level_index": args.level_index,
            "kernel": spec.to_dict(),
            "prior": prior.to_dict(),
            "phi_grid": [float(g) for g in grid],
        },
    )
    sys.stdout.write(f"wrote {grid.size} probe points to {path}\n")
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory (default: current)")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument(
        "--prior",
        choices=PRIOR_KINDS,
        default=None,
        help="prior for the range parameters",
    )
    parser.add_argument(
        "--kernel",
        choices=("power_exponential", "matern"),
        default=None,
        help="correlation family",
    )
    parser.add_argument(
        "--shape",
        type=float,
        default=None,
        help="roughness (power_exponential) or smoothness (matern)",
    )
    parser.add_argument("--nugget", type=float, default=None, help="diagonal jitter")
    parser.add_argument("--jr-a0", type=float, default=None, help="jointly robust a0")
    parser.add_argument("--jr-b0", type=float, default=None, help="jointly robust b0")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfcokrig",
        description=(
            "Multifidelity emulation with autoregressive cokriging and "
            "objective-Bayes range estimation"
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate a model from per-level CSVs")
    _add_common(p_fit)
    p_fit.add_argument(
        "--level",
        action="append",
        help="per-level CSV (repeat, lowest fidelity first)",
    )
    p_fit.add_argument(
        "--starts", type=int, default=None, help="optimizer multi-start count"
    )
    p_fit.add_argument(
        "--method",
        choices=("posterior", "plugin"),
        default=None,
        help="posterior maximization or the plug-in baseline",
    )
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict at grid points from a model file")
    _add_common(p_pred)
    p_pred.add_argument("--model", required=True, help="model JSON from fit")
    p_pred.add_argument("--grid", help="CSV of query points")
    p_pred.add_argument(
        "--draws", type=int, default=4000, help="draws for empirical intervals"
    )
    p_pred.set_defaults(func=cmd_predict)

    p_sample = sub.add_parser("sample", help="joint predictive draws at one point")
    _add_common(p_sample)
    p_sample.add_argument("--model", required=True, help="model JSON from fit")
    p_sample.add_argument("--x0", required=True, help="comma-separated coordinates")
    p_sample.add_argument("--draws", type=int, default=1000, help="number of draws")
    p_sample.set_defaults(func=cmd_sample)

    p_bench = sub.add_parser("benchmark", help="seeded borehole benchmark")
    _add_common(p_bench)
    p_bench.add_argument("--n-low", type=int, default=None)
    p_bench.add_argument("--n-high", type=int, default=None)
    p_bench.add_argument("--n-test", type=int, default=None)
    p_bench.add_argument("--reps", type=int, default=None)
    p_bench.add_argument("--starts", type=int, default=None)
    p_bench.add_argument(
        "--method", choices=("posterior", "plugin"), default=None
    )
    p_bench.set_defaults(func=cmd_benchmark)

    p_tail = sub.add_parser(
        "tailprobe", help="integrated likelihood and prior along a range ray"
    )
    _add_common(p_tail)
    p_tail.add_argument("--level", action="append", help="per-level CSV (repeat)")
    p_tail.add_argument(
        "--level-index", type=int, default=1, help="one-based level to probe"
    )
    p_tail.add_argument("--phi-min", type=float, default=1e-6)
    p_tail.add_argument("--phi-max", type=float, default=1e6)
    p_tail.add_argument("--n-grid", type=int, default=25)
    p_tail.add_argument(
        "--phi-grid", default=None, help="explicit comma-separated grid (overrides range)"
    )
    p_tail.set_defaults(func=cmd_tailprobe)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"estimation error: {exc}\n")
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
