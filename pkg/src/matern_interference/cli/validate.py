"""Analytic results against Monte Carlo on a parameter grid."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import TextIO

from .. import analytics, retention
from ..analytics import ModelParams
from ..channel import fading_moment2
from ..montecarlo import SimConfig, default_window, estimate_stats, windowed_mean

CONVENTIONS = ("lambda_p", "printed")
SIGMAS = 3.0
REPORT_COLUMNS = (
    "lambda_p", "d", "alpha", "m", "quantity",
    "analytic", "mc", "mc_stderr", "tolerance", "status",
)


@dataclass(frozen=True)
class ValidationGrid:
    lambda_p: tuple = (0.5, 1.0)
    d: tuple = (0.5, 1.0)
    alpha: tuple = (3.0,)
    m: tuple = (1.0, 2.0)
    realizations: int = 20_000
    seed: int = 0
    window_radius: float = 50.0
    threads: int = 1
    rel_tol: float = analytics.OUTER_REL_TOL
    abs_tol: float = analytics.OUTER_ABS_TOL
    convention: str = "lambda_p"

    def __post_init__(self):
        if self.realizations < 2:
            raise ValueError("validation needs at least two realizations")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        for name in ("lambda_p", "d", "alpha", "m"):
            if not getattr(self, name):
                raise ValueError(f"empty {name} grid")

    def points(self):
        for lp, d, alpha, m in itertools.product(self.lambda_p, self.d, self.alpha, self.m):
            yield ModelParams(lp, d, alpha, m)


def _second_moment_tail(params: ModelParams, radius: float) -> float:
    # variance contributed by single senders beyond the window
    a = params.alpha
    return params.lam * fading_moment2(params.m) * 2.0 * math.pi * radius ** (2 - 2 * a) / (2 * a - 2)


def validate_point(params: ModelParams, grid: ValidationGrid) -> list[dict]:
    cfg = SimConfig(params, default_window(params, grid.window_radius), grid.realizations,
                    grid.seed, threads=grid.threads)
    est = estimate_stats(cfg)
    tol = {"rel_tol": grid.rel_tol, "abs_tol": grid.abs_tol}
    var = analytics.variance_interference(params, **tol)
    cov = analytics.covariance_interference(params, **tol)
    rho = analytics.correlation_interference(params, **tol)
    tail = _second_moment_tail(params, grid.window_radius)
    p12 = retention.p12(params.lambda_p, params.d, convention=grid.convention)
    checks = [
        # the simulated mean lacks senders beyond the window; compare like with like
        ("mean_windowed", windowed_mean(params, grid.window_radius), 0.0, est.mean, "mean"),
        ("variance", var.value, var.abs_error + tail, est.variance, "variance"),
        ("covariance", cov.value, cov.abs_error + tail, est.covariance, "covariance"),
        ("correlation", rho.value, rho.abs_error + tail / var.value, est.correlation, "correlation"),
        ("p1", params.p1, 0.0, est.p1, "p1"),
        ("p12", p12, retention.DEFAULT_REL_TOL * p12, est.p12, "p12"),
    ]
    rows = []
    for name, value, qerr, mc, se_key in checks:
        se = est.std_errors[se_key]
        limit = SIGMAS * se + qerr
        rows.append({
            "lambda_p": params.lambda_p, "d": params.d, "alpha": params.alpha, "m": params.m,
            "quantity": name, "analytic": value, "mc": mc, "mc_stderr": se,
            "tolerance": limit, "status": "pass" if abs(value - mc) <= limit else "FAIL",
        })
    return rows


def run_validation(grid: ValidationGrid) -> list[dict]:
    rows = []
    for params in grid.points():
        rows.extend(validate_point(params, grid))
    return rows


def _fmt(v, digits):
    if isinstance(v, str):
        return v
    if math.isinf(v):
        return "inf"
    return f"{v:.{digits}g}"


def write_report(rows, grid: ValidationGrid, stream: TextIO) -> None:
    stream.write(f"# realizations = {grid.realizations}\n")
    stream.write(f"# seed = {grid.seed}\n")
    stream.write(f"# window_radius = {grid.window_radius!r}\n")
    stream.write(f"# convention = {grid.convention}\n")
    stream.write(f"# rule = |analytic - mc| <= {SIGMAS:g} * mc_stderr + numerical error\n")
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([
            _fmt(row[c], 2 if c in ("mc_stderr", "tolerance") else 9) for c in REPORT_COLUMNS
        ])
    failed = sum(r["status"] != "pass" for r in rows)
    stream.write(f"# {len(rows) - failed} passed, {failed} failed\n")
