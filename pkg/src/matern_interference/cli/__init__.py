"""Command-line interface.

Subcommands: ``eval``, ``curve``, ``validate``, ``simulate`` and ``probs``.
Settings resolve in the order built-in defaults, ``--config`` file, flags.
Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 validation
failure.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime
import json
import math
import sys
from pathlib import Path

import numpy as np

from .. import analytics, retention
from ..analytics import ModelParams
from ..montecarlo import (
    THREADS_ENV,
    SimConfig,
    default_threads,
    default_window,
    estimate_retention_probs,
    estimate_slot_covariances,
    estimate_stats,
)
from ..pointprocess import independent_thinnings, sample_ppp, write_pattern
from ..quadrature import QuadratureError
from . import curves
from .config import ConfigError, as_float, as_int, as_list, format_float, load_config, metadata_from_csv
from .validate import ValidationGrid, run_validation, write_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VALIDATION = 3

DEFAULTS = {
    "lambda_p": "1",
    "d": "1",
    "alpha": "3",
    "m": "1",
    "seed": "0",
    "window_radius": "50",
    "rel_tol": repr(analytics.OUTER_REL_TOL),
    "abs_tol": repr(analytics.OUTER_ABS_TOL),
}
REALIZATION_DEFAULTS = {"eval": "0", "simulate": "10000", "validate": "20000", "curve": "0", "probs": "0"}
COMMON_KEYS = (
    "lambda_p", "d", "alpha", "m", "seed", "realizations",
    "window_radius", "rel_tol", "abs_tol", "threads",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--lambda-p", help="intensity of the parent Poisson process")
    g.add_argument("--d", help="hard-core distance")
    g.add_argument("--alpha", help="path-loss exponent (> 2)")
    g.add_argument("--m", help="Nakagami fading parameter (>= 0.5, 'inf' for no fading)")
    g.add_argument("--seed", help="Monte Carlo seed (64-bit unsigned)")
    g.add_argument("--realizations", help="Monte Carlo realizations")
    g.add_argument("--window-radius", help="observation radius of the simulated network")
    g.add_argument("--rel-tol", help="relative tolerance of the interference integrals")
    g.add_argument("--abs-tol", help="absolute tolerance of the interference integrals")
    g.add_argument("--threads", help=f"worker threads (default: ${THREADS_ENV} or 1)")
    g.add_argument("--config", help="flat 'key = value' settings file")
    g.add_argument("--out", help="write output to this file instead of stdout")
    g.add_argument("--json", action="store_true", help="emit one JSON document")
    return p


def _settings(args, command, extra_config=None):
    """Merge defaults, config files and flags into a dict of strings.

    Also returns the keys that were set explicitly by a file or a flag.
    """
    values = dict(DEFAULTS)
    values["realizations"] = REALIZATION_DEFAULTS[command]
    explicit = set()
    for path in (args.config, extra_config):
        if path:
            loaded = load_config(path)
            values.update(loaded)
            explicit.update(loaded)
    for key in COMMON_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
            explicit.add(key)
    return values, explicit


def _threads(values):
    if "threads" in values:
        n = as_int(values["threads"], "threads")
        if n < 1:
            raise ConfigError("threads must be positive")
        return n
    return default_threads()


def _single(values, key):
    items = as_list(values[key], key)
    if len(items) != 1:
        raise ConfigError(f"{key}: expected one value, got {len(items)}")
    return items[0]


def _params(values) -> ModelParams:
    return ModelParams(
        lambda_p=_single(values, "lambda_p"),
        d=_single(values, "d"),
        alpha=_single(values, "alpha"),
        m=_single(values, "m"),
    )


def _seed(values):
    seed = as_int(values["seed"], "seed")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return seed


def _realizations(values, minimum=0):
    n = as_int(values["realizations"], "realizations")
    if n < minimum:
        raise ConfigError(f"realizations must be at least {minimum}, got {n}")
    return n


def parse_grid(text: str, key: str = "grid") -> tuple:
    """``a,b,c`` or ``lin:start:stop:count`` or ``log:start:stop:count``."""
    text = text.strip()
    for kind, fn in (("lin:", np.linspace), ("log:", np.geomspace)):
        if text.startswith(kind):
            parts = text[len(kind):].split(":")
            if len(parts) != 3:
                raise ConfigError(f"{key}: expected {kind}start:stop:count")
            a, b = as_float(parts[0], key), as_float(parts[1], key)
            n = as_int(parts[2], key)
            if n < 1:
                raise ConfigError(f"{key}: count must be positive")
            if kind == "log:" and not (a > 0 and b > 0):
                raise ConfigError(f"{key}: log grid needs positive bounds")
            return tuple(float(v) for v in fn(a, b, n))
    return tuple(as_list(text, key))


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
        return
    try:
        stream = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None
    with stream:
        yield stream


def _fmt(v, digits=9):
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.{digits}g}"


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


EVAL_QUANTITIES = ("mean", "variance", "covariance", "correlation")


def cmd_eval(args) -> int:
    values, _ = _settings(args, "eval")
    params = _params(values)
    rel_tol = as_float(values["rel_tol"], "rel_tol")
    abs_tol = as_float(values["abs_tol"], "abs_tol")
    chosen = [q for q in EVAL_QUANTITIES if getattr(args, q)]
    if args.all or not (chosen or args.probs or args.baseline):
        chosen = list(EVAL_QUANTITIES)
        args.probs = args.baseline = True
    results = {}
    if args.probs:
        p12 = retention.p12(params.lambda_p, params.d)
        results["p1"] = (params.p1, 0.0)
        results["p12"] = (p12, retention.DEFAULT_REL_TOL * p12)
        results["lambda"] = (params.lam, 0.0)
    tol = {"rel_tol": rel_tol, "abs_tol": abs_tol}
    for q in chosen:
        if q == "mean":
            results["mean"] = (analytics.mean_interference(params), 0.0)
            continue
        fn = {
            "variance": analytics.variance_interference,
            "covariance": analytics.covariance_interference,
            "correlation": analytics.correlation_interference,
        }[q]
        res = fn(params, form=args.form, **tol)
        results[q] = (res.value, res.abs_error)
    if args.baseline:
        base = analytics.poisson_baseline_stats(params)
        results["poisson_variance"] = (base.variance, 0.0)
        results["poisson_covariance"] = (base.covariance, 0.0)
        results["poisson_correlation"] = (base.correlation, 0.0)

    with _output(args.out) as out:
        if args.json:
            doc = {
                "params": {"lambda_p": params.lambda_p, "d": params.d, "alpha": params.alpha,
                           "m": _fmt(params.m) if math.isinf(params.m) else params.m},
                "form": args.form,
                "results": {k: {"value": v, "error": e} for k, (v, e) in results.items()},
            }
            json.dump(doc, out, indent=2)
            out.write("\n")
        else:
            for key in ("lambda_p", "d", "alpha", "m"):
                out.write(f"{key} = {_fmt(getattr(params, key))}\n")
            for key, (v, e) in results.items():
                out.write(f"{key} = {_fmt(v)} +- {_fmt(e, 2)}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------


def _curve_request(args, values):
    """Specs and metadata from a preset or a custom sweep."""
    mc_n = _realizations(values)
    seed = _seed(values)
    radius = as_float(values["window_radius"], "window_radius")
    threads = _threads(values)
    mc = curves.McCheck(mc_n, seed, radius, threads) if mc_n > 0 else None
    meta = curves.base_metadata("curve")
    meta["created"] = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    preset = args.preset or values.get("preset")
    if preset:
        given = [k for k in ("lambda_p", "d", "alpha", "m") if getattr(args, k) is not None]
        given += [k for k in ("quantity", "sweep", "grid") if getattr(args, k) is not None]
        if given:
            raise UsageError(f"preset {preset} fixes its parameters; drop --{given[0].replace('_', '-')}")
        specs = curves.preset(preset, mc)
        meta["preset"] = preset
    else:
        quantity = args.quantity or values.get("quantity")
        sweep = args.sweep or values.get("sweep")
        grid_text = args.grid or values.get("grid")
        if not (quantity and sweep and grid_text):
            raise UsageError("give a preset, or --quantity, --sweep and --grid")
        grid = parse_grid(grid_text)
        fixed = _params(values)
        specs = [curves.CurveSpec(quantity, sweep, grid, fixed, "", mc)]
        meta["quantity"] = quantity
        meta["sweep"] = sweep
        meta["grid"] = ", ".join(format_float(x) for x in grid)
        for key in ("lambda_p", "d", "alpha", "m"):
            meta[key] = format_float(getattr(fixed, key))
    meta["rel_tol"] = format_float(as_float(values["rel_tol"], "rel_tol"))
    meta["abs_tol"] = format_float(as_float(values["abs_tol"], "abs_tol"))
    meta["realizations"] = str(mc_n)
    meta["seed"] = str(seed)
    meta["window_radius"] = format_float(radius)
    return specs, meta, threads


def cmd_curve(args) -> int:
    if args.replay:
        try:
            text = Path(args.replay).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {args.replay}: {exc.strerror}") from None
        values = dict(DEFAULTS)
        values["realizations"] = REALIZATION_DEFAULTS["curve"]
        meta = metadata_from_csv(text)
        for key in ("tool", "command", "created"):
            meta.pop(key, None)
        values.update(meta)
        if args.threads is not None:
            values["threads"] = args.threads
    else:
        values, _ = _settings(args, "curve")
    specs, meta, threads = _curve_request(args, values)
    data = curves.run_curves(
        specs, meta,
        as_float(values["rel_tol"], "rel_tol"),
        as_float(values["abs_tol"], "abs_tol"),
        threads,
    )
    with _output(args.out) as out:
        if args.json:
            curves.write_json(data, out)
        else:
            curves.write_csv(data, out)
    if data.failures:
        print(f"error: {data.failures} grid points failed to converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def _validation_grid(args, values, explicit) -> ValidationGrid:
    grid = ValidationGrid()
    kwargs = {}
    for key in ("lambda_p", "d", "alpha", "m"):
        # model parameters that were set replace the default grid axis
        if key in explicit:
            kwargs[key] = tuple(as_list(values[key], key))
    convention = "printed" if args.printed_convention else values.get("convention", grid.convention)
    return ValidationGrid(
        realizations=_realizations(values, minimum=2),
        seed=_seed(values),
        window_radius=as_float(values["window_radius"], "window_radius"),
        threads=_threads(values),
        rel_tol=as_float(values["rel_tol"], "rel_tol"),
        abs_tol=as_float(values["abs_tol"], "abs_tol"),
        convention=convention,
        **kwargs,
    )


def cmd_validate(args) -> int:
    values, explicit = _settings(args, "validate", args.config_file)
    grid = _validation_grid(args, values, explicit)
    rows = run_validation(grid)
    with _output(args.out) as out:
        if args.json:
            json.dump({"rows": rows}, out, indent=2, default=str)
            out.write("\n")
        else:
            write_report(rows, grid, out)
    return EXIT_VALIDATION if any(r["status"] != "pass" for r in rows) else EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    values, _ = _settings(args, "simulate")
    params = _params(values)
    window = default_window(params, as_float(values["window_radius"], "window_radius"))
    if args.slots < 2:
        raise UsageError("--slots must be at least 2")
    config = SimConfig(
        params, window, _realizations(values, minimum=2), _seed(values),
        batch=args.progress_every, threads=_threads(values),
        model="aloha" if args.aloha else "matern",
    )
    progress = None if args.quiet else sys.stderr
    if args.pattern_out:
        rng = np.random.default_rng([config.seed, 2**32])
        pattern = sample_ppp(params.lambda_p, window, rng)
        thinnings = independent_thinnings(pattern, params.d, args.slots, rng)
        with _output(args.pattern_out) as stream:
            write_pattern(stream, thinnings)
    with _output(args.out) as out:
        if args.slots > 2:
            res = estimate_slot_covariances(config, args.slots, progress)
            if args.json:
                json.dump({"mean": res.mean.tolist(), "covariance": res.covariance.tolist()}, out, indent=2)
                out.write("\n")
            else:
                out.write("mean = " + " ".join(_fmt(v) for v in res.mean) + "\n")
                for row in res.covariance:
                    out.write("cov = " + " ".join(_fmt(v) for v in row) + "\n")
            return EXIT_OK
        est = estimate_stats(config, progress)
        fields = ("mean", "variance", "covariance", "correlation", "p1", "p12")
        if args.json:
            doc = {f: {"value": getattr(est, f), "stderr": est.std_errors[f]} for f in fields}
            doc["bias_bound"] = est.bias_bound
            doc["realizations"] = est.realizations
            json.dump(doc, out, indent=2)
            out.write("\n")
        else:
            for f in fields:
                out.write(f"{f} = {_fmt(getattr(est, f))} +- {_fmt(est.std_errors[f], 2)}\n")
            out.write(f"bias_bound = {_fmt(est.bias_bound, 2)}\n")
            out.write(f"realizations = {est.realizations}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# probs
# ---------------------------------------------------------------------------


PROB_COLUMNS = ("r", "gamma_overlap", "gamma_union", "p11", "p12r", "rho2", "cross_density")
PROB_MC_COLUMNS = ("mc_p11", "mc_p11_stderr", "mc_p12r", "mc_p12r_stderr")


def cmd_probs(args) -> int:
    values, _ = _settings(args, "probs")
    params = _params(values)
    lp, d = params.lambda_p, params.d
    if args.grid:
        grid = parse_grid(args.grid)
    else:
        grid = tuple(float(v) for v in np.linspace(0.1, 2.5, 25) * (d if d > 0 else 1.0))
    if any(r <= 0 for r in grid):
        raise UsageError("distances must be positive")
    n_mc = _realizations(values)
    rows = []
    for r in grid:
        p11 = retention.p11(r, lp, d, method=args.method)
        p12r = retention.p12r(r, lp, d, method=args.method)
        rows.append([r, retention.gamma_overlap(r, d), retention.gamma_union(r, d),
                     p11, p12r, lp * lp * p11, lp * lp * p12r])
    if n_mc:
        config = SimConfig(params, default_window(params), n_mc, _seed(values))
        est = estimate_retention_probs(config, grid)
        for i, row in enumerate(rows):
            row += [est.p11[i], est.se_p11[i], est.p12r[i], est.se_p12r[i]]
    columns = PROB_COLUMNS + (PROB_MC_COLUMNS if n_mc else ())
    meta = curves.base_metadata("probs")
    meta.update({
        "lambda_p": format_float(lp), "d": format_float(d), "method": args.method,
        "p1": _fmt(params.p1), "p12": _fmt(retention.p12(lp, d, method=args.method)),
        "lambda": _fmt(params.lam), "realizations": str(n_mc),
    })
    with _output(args.out) as out:
        if args.json:
            json.dump({"metadata": meta, "columns": list(columns),
                       "rows": [dict(zip(columns, row)) for row in rows]}, out, indent=2)
            out.write("\n")
            return EXIT_OK
        for key, value in meta.items():
            out.write(f"# {key} = {value}\n")
        out.write(",".join(columns) + "\r\n")
        for row in rows:
            cells = [_fmt(v, 2 if c.endswith("stderr") else 9) for c, v in zip(columns, row)]
            out.write(",".join(cells) + "\r\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _Parser(prog="matern-interference",
                     description="Interference statistics of Matérn hard-core networks.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("eval", parents=[common], help="analytic statistics at one parameter point")
    for q in EVAL_QUANTITIES:
        p.add_argument(f"--{q}", action="store_true")
    p.add_argument("--probs", action="store_true", help="retention probabilities p1, p12")
    p.add_argument("--baseline", action="store_true", help="matched ALOHA network")
    p.add_argument("--all", action="store_true")
    p.add_argument("--form", choices=analytics.FORMS, default="difference")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", parents=[common], help="parameter sweep as CSV")
    p.add_argument("preset", nargs="?", choices=curves.PRESETS)
    p.add_argument("--quantity", choices=curves.QUANTITIES)
    p.add_argument("--sweep", choices=curves.SWEEPS)
    p.add_argument("--grid", help="a,b,c or lin:start:stop:count or log:start:stop:count")
    p.add_argument("--replay", help="rerun the sweep recorded in a curve file's header")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("validate", parents=[common], help="analytics against Monte Carlo")
    p.add_argument("config_file", nargs="?", help="settings file (same grammar as --config)")
    p.add_argument("--printed-convention", action="store_true",
                   help="use the thinned intensity in the p12 closed form (expected to fail)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common], help="raw Monte Carlo run")
    p.add_argument("--slots", type=int, default=2, help="number of thinnings per pattern")
    p.add_argument("--aloha", action="store_true", help="independent thinning with probability p1")
    p.add_argument("--pattern-out", help="dump one realization as 'x y mark kept...' lines")
    p.add_argument("--progress-every", type=int, default=10_000)
    p.add_argument("--quiet", action="store_true", help="no progress lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probs", parents=[common], help="retention probability table")
    p.add_argument("--grid", help="distances r")
    p.add_argument("--method", choices=("quadrature", "closed"), default="quadrature")
    p.set_defaults(func=cmd_probs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        return args.func(args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuadratureError as exc:
        print(f"error: numerical integration failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
