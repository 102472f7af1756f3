"""Parameter sweeps and their CSV / JSON serialisation."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
from scipy.optimize import brentq

from .. import __version__, analytics, retention
from ..analytics import ModelParams
from ..montecarlo import (
    SimConfig,
    default_window,
    estimate_retention_probs,
    estimate_stats,
)
from ..quadrature import QuadratureError
from .config import format_float

QUANTITIES = (
    "p1", "p12", "p11", "p12r", "rho2", "cross_density", "lambda2",
    "mean", "variance", "covariance", "correlation", "poisson_correlation",
)
SWEEPS = ("d", "lambda_p", "alpha", "m", "r", "p1_fraction")
# quantities that are functions of a distance r at fixed parameters
DISTANCE_QUANTITIES = ("p11", "p12r", "rho2", "cross_density", "lambda2")
INTERFERENCE_QUANTITIES = ("mean", "variance", "covariance", "correlation", "poisson_correlation")
COLUMNS = (
    "series", "quantity", "sweep", "x", "lambda_p", "d", "alpha", "m",
    "p1", "lambda", "value", "error", "mc_value", "mc_stderr",
)
PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6")


@dataclass(frozen=True)
class McCheck:
    realizations: int
    seed: int = 0
    window_radius: float = 50.0
    threads: int = 1


@dataclass(frozen=True)
class CurveSpec:
    quantity: str
    sweep_variable: str
    sweep_grid: tuple
    fixed: ModelParams
    label: str = ""
    mc_check: McCheck | None = None

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}; choose from {', '.join(QUANTITIES)}")
        if self.sweep_variable not in SWEEPS:
            raise ValueError(f"unknown sweep variable {self.sweep_variable!r}; choose from {', '.join(SWEEPS)}")
        grid = tuple(float(x) for x in self.sweep_grid)
        if not grid:
            raise ValueError("sweep grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sweep grid must be strictly increasing")
        object.__setattr__(self, "sweep_grid", grid)
        r_quantity = self.quantity in DISTANCE_QUANTITIES
        if r_quantity != (self.sweep_variable == "r"):
            raise ValueError(
                f"{self.quantity} needs sweep variable "
                + ("'r'" if r_quantity else "other than 'r'")
            )
        if self.sweep_variable == "r" and grid[0] <= 0:
            raise ValueError("distances must be positive")
        if self.sweep_variable == "p1_fraction" and not (0 < grid[0] and grid[-1] <= 1):
            raise ValueError("p1_fraction grid must lie in (0, 1]")


@dataclass
class CurveData:
    metadata: dict
    rows: list = field(default_factory=list)
    failures: int = 0


def d_for_p1(lambda_p: float, fraction: float) -> float:
    """Hard-core distance at which a fraction ``fraction`` of the nodes is retained."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1:
        return 0.0
    # p1 = (1 - e^-a) / a decreases from 1 to 0; bracket a, then d
    hi = 1.0
    while retention.p1(1.0, math.sqrt(hi / math.pi)) > fraction:
        hi *= 2.0
    a = brentq(lambda a: retention.p1(1.0, math.sqrt(a / math.pi)) - fraction, 0.0, hi,
               xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return math.sqrt(a / (math.pi * lambda_p))


def point_params(spec: CurveSpec, x: float) -> ModelParams:
    if spec.sweep_variable in ("r",):
        return spec.fixed
    if spec.sweep_variable == "p1_fraction":
        return dataclasses.replace(spec.fixed, d=d_for_p1(spec.fixed.lambda_p, x))
    return dataclasses.replace(spec.fixed, **{spec.sweep_variable: x})


def evaluate(quantity: str, params: ModelParams, r: float | None, rel_tol: float, abs_tol: float):
    """(value, error estimate) of one analytic quantity."""
    lp, d = params.lambda_p, params.d
    qerr = retention.DEFAULT_REL_TOL
    if quantity == "p1":
        return params.p1, 0.0
    if quantity == "p12":
        v = retention.p12(lp, d)
        return v, qerr * v
    if quantity == "lambda2":
        return params.lam**2, 0.0
    if quantity in ("p11", "rho2"):
        v = retention.p11(r, lp, d)
        return (v, 0.0) if quantity == "p11" else (lp * lp * v, 0.0)
    if quantity in ("p12r", "cross_density"):
        v = retention.p12r(r, lp, d)
        if quantity == "cross_density":
            v *= lp * lp
        return v, qerr * v
    if quantity == "poisson_correlation":
        return analytics.poisson_baseline_correlation(params.p1, params.m), 0.0
    if quantity == "mean":
        return analytics.mean_interference(params), 0.0
    tol = {"rel_tol": rel_tol, "abs_tol": abs_tol}
    fn = {
        "variance": analytics.variance_interference,
        "covariance": analytics.covariance_interference,
        "correlation": analytics.correlation_interference,
    }[quantity]
    res = fn(params, **tol)
    return res.value, res.abs_error


def simulate(quantity: str, params: ModelParams, r: float | None, mc: McCheck):
    """(estimate, standard error) of one quantity by Monte Carlo."""
    if quantity in INTERFERENCE_QUANTITIES:
        model = "aloha" if quantity == "poisson_correlation" else "matern"
        cfg = SimConfig(params, default_window(params, mc.window_radius), mc.realizations,
                        mc.seed, threads=mc.threads, model=model)
        est = estimate_stats(cfg)
        key = "correlation" if quantity == "poisson_correlation" else quantity
        return getattr(est, key), est.std_errors[key]
    cfg = SimConfig(params, default_window(params, mc.window_radius), mc.realizations, mc.seed)
    est = estimate_retention_probs(cfg, [r] if r is not None else [])
    lp2 = params.lambda_p**2
    if quantity == "p1":
        return est.p1, est.se_p1
    if quantity == "p12":
        return est.p12, est.se_p12
    if quantity == "lambda2":
        return lp2 * est.p1**2, 2.0 * lp2 * est.p1 * est.se_p1
    if quantity in ("p11", "rho2"):
        scale = 1.0 if quantity == "p11" else lp2
        return scale * est.p11[0], scale * est.se_p11[0]
    scale = 1.0 if quantity == "p12r" else lp2
    return scale * est.p12r[0], scale * est.se_p12r[0]


def _row(spec: CurveSpec, x: float, rel_tol: float, abs_tol: float):
    params = point_params(spec, x)
    r = x if spec.sweep_variable == "r" else None
    row = {
        "series": spec.label or spec.quantity,
        "quantity": spec.quantity,
        "sweep": spec.sweep_variable,
        "x": x,
        "lambda_p": params.lambda_p,
        "d": params.d,
        "alpha": params.alpha,
        "m": params.m,
        "p1": params.p1,
        "lambda": params.lam,
        "value": None,
        "error": None,
        "mc_value": None,
        "mc_stderr": None,
    }
    failed = False
    try:
        row["value"], row["error"] = evaluate(spec.quantity, params, r, rel_tol, abs_tol)
    except QuadratureError:
        failed = True
    if spec.mc_check is not None:
        row["mc_value"], row["mc_stderr"] = simulate(spec.quantity, params, r, spec.mc_check)
    return row, failed


def run_curves(specs, metadata: dict, rel_tol: float, abs_tol: float, threads: int = 1) -> CurveData:
    """Evaluate every grid point; rows come out in grid order."""
    jobs = [(spec, x) for spec in specs for x in spec.sweep_grid]
    data = CurveData(metadata)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for row, failed in pool.map(lambda job: _row(job[0], job[1], rel_tol, abs_tol), jobs):
            data.rows.append(row)
            data.failures += failed
    return data


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _lin(a, b, n):
    return tuple(float(v) for v in np.linspace(a, b, n))


def _m_label(m):
    return "inf" if math.isinf(m) else format(m, "g")


def preset(name: str, mc: McCheck | None = None) -> list[CurveSpec]:
    """Curve families of the six reference plots.

    Fixed parameters: lambda_p = 1 and alpha = 3 throughout, d = 1 where d is
    not swept.
    """
    base = ModelParams(lambda_p=1.0, d=1.0, alpha=3.0, m=1.0)
    specs = []
    if name == "fig1":
        grid = _lin(0.01, 2.5, 250)
        for q in ("lambda2", "rho2", "cross_density"):
            specs.append(CurveSpec(q, "r", grid, base, q, mc))
    elif name == "fig2":
        grid = _lin(0.05, 1.0, 20)
        for m in (0.5, 1.0, math.inf):
            fixed = dataclasses.replace(base, m=m)
            specs.append(CurveSpec("correlation", "p1_fraction", grid, fixed, f"mpp_m={_m_label(m)}", mc))
            specs.append(CurveSpec("poisson_correlation", "p1_fraction", grid, fixed,
                                   f"ppp_m={_m_label(m)}", mc))
    elif name == "fig3":
        grid = tuple(float(v) for v in np.geomspace(0.5, 100.0, 24))
        for d in (0.4, 0.8, 1.2):
            fixed = dataclasses.replace(base, d=d)
            specs.append(CurveSpec("correlation", "m", grid, fixed, f"mpp_d={d:g}", mc))
            specs.append(CurveSpec("poisson_correlation", "m", grid, fixed, f"ppp_d={d:g}", mc))
    elif name == "fig4":
        # quadrature loses accuracy below alpha = 2.3, so the sweep starts there
        grid = _lin(2.3, 5.0, 28)
        for m in (0.5, 1.0, 2.0, 6.0):
            specs.append(CurveSpec("correlation", "alpha", grid, dataclasses.replace(base, m=m),
                                   f"mpp_m={_m_label(m)}", mc))
    elif name == "fig5":
        grid = _lin(0.05, 3.0, 60)
        for m in (0.5, 1.0, 2.0, 6.0, math.inf):
            specs.append(CurveSpec("correlation", "d", grid, dataclasses.replace(base, m=m),
                                   f"mpp_m={_m_label(m)}", mc))
    elif name == "fig6":
        grid = _lin(0.1, 2.0, 20)
        for m in (0.5, 1.0, 2.0, 5.0):
            specs.append(CurveSpec("correlation", "lambda_p", grid, dataclasses.replace(base, m=m),
                                   f"mpp_m={_m_label(m)}", mc))
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return specs


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt_value(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    if math.isinf(v):
        return "inf"
    return f"{v:.9g}"


def _fmt_error(v):
    if v is None or math.isnan(v):
        return ""
    return f"{v:.2g}"


_ERROR_COLUMNS = ("error", "mc_stderr")


def _cells(row):
    return [_fmt_error(row[c]) if c in _ERROR_COLUMNS else _fmt_value(row[c]) for c in COLUMNS]


def write_csv(data: CurveData, stream: TextIO) -> None:
    """``# key = value`` metadata lines, then an RFC 4180 table."""
    for key, value in data.metadata.items():
        stream.write(f"# {key} = {value}\n")
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(COLUMNS)
    for row in data.rows:
        writer.writerow(_cells(row))


def write_json(data: CurveData, stream: TextIO) -> None:
    doc = {
        "metadata": data.metadata,
        "columns": list(COLUMNS),
        "rows": [dict(zip(COLUMNS, _cells(row))) for row in data.rows],
    }
    json.dump(doc, stream, indent=2)
    stream.write("\n")


def base_metadata(command: str) -> dict:
    return {"tool": f"matern-interference {__version__}", "command": command}
