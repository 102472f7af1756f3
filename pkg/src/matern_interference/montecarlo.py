"""Monte Carlo estimation of interference statistics and retention frequencies.

Each realization draws a Poisson pattern on the disc of radius R + guard,
thins it k times with independent marks, and sums the fading-weighted path
gains of the retained points inside radius R.  Realization ``i`` draws from
``np.random.default_rng([seed, i])``.  Realizations are grouped into a fixed
set of batches whose moments are merged in batch order, so results do not
depend on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numba
import numpy as np

from .analytics import ModelParams
from .pointprocess import Window, _sweep_cells

__all__ = [
    "SimConfig",
    "SimEstimate",
    "SlotCovariances",
    "RetentionEstimate",
    "default_threads",
    "default_window",
    "estimate_retention_probs",
    "estimate_slot_covariances",
    "estimate_stats",
    "matched_aloha",
    "simulate_interference_pair",
    "simulate_slots",
    "truncation_bias_bound",
    "windowed_mean",
]

THREADS_ENV = "MATERN_INTERFERENCE_THREADS"
DEFAULT_RADIUS = 50.0
N_BATCHES = 100
MODELS = ("matern", "aloha")


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        n = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    return n


def default_window(params: ModelParams, radius: float = DEFAULT_RADIUS) -> Window:
    return Window(radius=radius, guard=params.d)


def truncation_bias_bound(params: ModelParams, radius: float) -> float:
    """Mean interference from senders beyond ``radius``: lambda 2 pi R^(2-alpha) / (alpha-2)."""
    if radius < 1:
        # inside the unit disc the gain is capped; bound by the full mean
        return params.lam * params.alpha * math.pi / (params.alpha - 2.0)
    return params.lam * 2.0 * math.pi * radius ** (2.0 - params.alpha) / (params.alpha - 2.0)


def windowed_mean(params: ModelParams, radius: float) -> float:
    """Exact E[I] when senders are restricted to the disc of ``radius``."""
    lam, alpha = params.lam, params.alpha
    if radius <= 1:
        return lam * math.pi * radius * radius
    return lam * (math.pi + 2.0 * math.pi * (1.0 - radius ** (2.0 - alpha)) / (alpha - 2.0))


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    window: Window
    realizations: int
    seed: int = 0
    batch: int = 10_000
    threads: int = 1
    model: str = "matern"
    bias_budget: float | None = None

    def __post_init__(self):
        if self.realizations < 2:
            raise ValueError("at least two realizations are required")
        if self.batch < 1:
            raise ValueError("progress batch must be positive")
        if self.threads < 1:
            raise ValueError("thread count must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.window.guard < self.params.d:
            raise ValueError("window guard must be at least the hard-core distance")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.bias_budget is not None and self.bias_bound > self.bias_budget:
            raise ValueError(
                f"window radius {self.window.radius} leaves a truncation bias of "
                f"{self.bias_bound:.3g}, above the budget {self.bias_budget:.3g}"
            )

    @property
    def bias_bound(self) -> float:
        return truncation_bias_bound(self.params, self.window.radius)


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    variance: float
    covariance: float
    correlation: float
    std_errors: dict
    bias_bound: float
    realizations: int
    # retention frequencies of points inside the observation disc
    p1: float = math.nan
    p12: float = math.nan


# ---------------------------------------------------------------------------
# realization kernel
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _realize(rng, lambda_p, d, radius, guard, alpha, m, q_aloha, interference, counts):
    """One realization with ``k = interference.size`` slots.

    ``counts`` receives (points inside the disc, retained in slot 0, retained
    in slots 0 and 1).  ``q_aloha`` < 0 selects Matérn thinning; otherwise
    each point sends independently with probability ``q_aloha``.
    """
    k = interference.size
    r0 = radius + guard
    h = max(d, 1.0 / math.sqrt(lambda_p))
    # one spare ring on each side keeps the stencil in bounds
    nc = int(math.ceil(2.0 * r0 / h)) + 3
    off = r0 + h
    side = 2.0 * r0
    # Poisson count on the bounding square, then rejection to the disc
    total = rng.poisson(lambda_p * side * side)
    px = np.empty(total)
    py = np.empty(total)
    cell = np.empty(total, np.int64)
    start = np.zeros(nc * nc + 1, np.int64)
    r02 = r0 * r0
    n = 0
    for _ in range(total):
        x = side * rng.random() - r0
        y = side * rng.random() - r0
        if x * x + y * y <= r02:
            px[n] = x
            py[n] = y
            c = int((x + off) / h) * nc + int((y + off) / h)
            cell[n] = c
            start[c + 1] += 1
            n += 1
    for c in range(nc * nc):
        start[c + 1] += start[c]
    pos = start[:-1].copy()
    xs = np.empty(n)
    ys = np.empty(n)
    for i in range(n):
        j = pos[cell[i]]
        pos[cell[i]] += 1
        xs[j] = px[i]
        ys[j] = py[i]
    marks = np.empty((n, k))
    for i in range(n):
        for t in range(k):
            marks[i, t] = rng.random()
    mn = np.full((n, k), 2.0)
    if q_aloha < 0.0:
        if d > 0.0:
            _sweep_cells(xs, ys, start, nc, marks, mn, d)
    else:
        # mark below q <=> sends; compare against the threshold instead
        for i in range(n):
            for t in range(k):
                mn[i, t] = q_aloha if marks[i, t] < q_aloha else -1.0

    no_fading = math.isinf(m)
    half = -0.5 * alpha
    rad2 = radius * radius
    for t in range(k):
        interference[t] = 0.0
    counts[0] = 0
    counts[1] = 0
    counts[2] = 0
    for i in range(n):
        r2 = xs[i] * xs[i] + ys[i] * ys[i]
        if r2 > rad2:
            continue
        counts[0] += 1
        g = -1.0
        for t in range(k):
            if marks[i, t] <= mn[i, t]:
                if g < 0.0:
                    g = 1.0 if r2 <= 1.0 else r2**half
                fade = 1.0 if no_fading else rng.standard_gamma(m) / m
                interference[t] += g * fade
        if k >= 2:
            keep0 = marks[i, 0] <= mn[i, 0]
            if keep0:
                counts[1] += 1
                if marks[i, 1] <= mn[i, 1]:
                    counts[2] += 1
        elif marks[i, 0] <= mn[i, 0]:
            counts[1] += 1


def _aloha_q(model, params):
    return params.p1 if model == "aloha" else -1.0


def simulate_slots(params: ModelParams, window: Window, rng: np.random.Generator, k: int,
                   model: str = "matern") -> np.ndarray:
    """Interference at the origin in ``k`` slots sharing one Poisson pattern."""
    if k < 1:
        raise ValueError("need at least one slot")
    if window.guard < params.d:
        raise ValueError("window guard must be at least the hard-core distance")
    out = np.empty(k)
    counts = np.empty(3, np.int64)
    _realize(rng, params.lambda_p, params.d, window.radius, window.guard,
             params.alpha, float(params.m), _aloha_q(model, params), out, counts)
    return out


def simulate_interference_pair(params: ModelParams, window: Window, rng: np.random.Generator):
    """(I1, I2) from two independent thinnings of one Poisson pattern."""
    i1, i2 = simulate_slots(params, window, rng, 2)
    return float(i1), float(i2)


# ---------------------------------------------------------------------------
# batched estimation
# ---------------------------------------------------------------------------


@dataclass
class _Batch:
    n: int
    mean: np.ndarray
    comoment: np.ndarray
    counts: np.ndarray


def _batch_bounds(total, batches):
    edges = [total * b // batches for b in range(batches + 1)]
    return list(zip(edges[:-1], edges[1:]))


def _run_batch(config: SimConfig, k: int, lo: int, hi: int) -> _Batch:
    p = config.params
    q = _aloha_q(config.model, p)
    values = np.empty((hi - lo, k))
    counts = np.empty((hi - lo, 3), np.int64)
    for row, idx in enumerate(range(lo, hi)):
        rng = np.random.default_rng([config.seed, idx])
        _realize(rng, p.lambda_p, p.d, config.window.radius, config.window.guard,
                 p.alpha, float(p.m), q, values[row], counts[row])
    mean = values.mean(axis=0)
    centred = values - mean
    return _Batch(hi - lo, mean, centred.T @ centred, counts.sum(axis=0))


def _run_batches(config: SimConfig, k: int, progress: TextIO | None):
    bounds = _batch_bounds(config.realizations, min(N_BATCHES, config.realizations))
    done = 0
    next_report = config.batch
    out = []
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        # map yields in submission order whatever the completion order
        for batch in pool.map(lambda b: _run_batch(config, k, *b), bounds):
            out.append(batch)
            done += batch.n
            if progress is not None and (done >= next_report or done == config.realizations):
                progress.write(f"progress {done}/{config.realizations} realizations\n")
                progress.flush()
                next_report = (done // config.batch + 1) * config.batch
    return out


def _merge(batches):
    """Chan et al. pairwise update, applied in batch order."""
    n = 0
    mean = None
    comoment = None
    for b in batches:
        if mean is None:
            n, mean, comoment = b.n, b.mean.copy(), b.comoment.copy()
            continue
        total = n + b.n
        delta = b.mean - mean
        mean = mean + delta * (b.n / total)
        comoment = comoment + b.comoment + np.outer(delta, delta) * (n * b.n / total)
        n = total
    return n, mean, comoment / (n - 1)


def _slot_stats(mean, cov):
    # slots are exchangeable: pool the marginal moments
    m = float(np.mean(mean))
    var = float(np.mean(np.diag(cov)))
    c = float(cov[0, 1])
    return m, var, c, c / var if var > 0 else math.nan


def _batch_se(values):
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        return math.nan
    return float(np.std(values, ddof=1, axis=0) / math.sqrt(values.shape[0]))


def _ratio(num, den):
    return num / den if den > 0 else math.nan


def estimate_stats(config: SimConfig, progress: TextIO | None = None) -> SimEstimate:
    """Sample mean, variance, cross-slot covariance and correlation.

    Mean and variance pool both slots.  The correlation is the sample
    covariance over the pooled sample variance.  Standard errors come from
    the spread of per-batch estimates (batch means).
    """
    batches = _run_batches(config, 2, progress)
    n, mean, cov = _merge(batches)
    mean_v, var_v, cov_v, corr_v = _slot_stats(mean, cov)

    per_batch = []
    for b in batches:
        if b.n < 2:
            continue
        per_batch.append(_slot_stats(b.mean, b.comoment / (b.n - 1)))
    per_batch = np.array(per_batch) if per_batch else np.empty((0, 4))
    counts = np.sum([b.counts for b in batches], axis=0)
    p1_batches = [_ratio(b.counts[1], b.counts[0]) for b in batches if b.counts[0] > 0]
    p12_batches = [_ratio(b.counts[2], b.counts[0]) for b in batches if b.counts[0] > 0]
    se = {
        "mean": _batch_se(per_batch[:, 0]) if len(per_batch) else math.nan,
        "variance": _batch_se(per_batch[:, 1]) if len(per_batch) else math.nan,
        "covariance": _batch_se(per_batch[:, 2]) if len(per_batch) else math.nan,
        "correlation": _batch_se(per_batch[:, 3]) if len(per_batch) else math.nan,
        "p1": _batch_se(p1_batches),
        "p12": _batch_se(p12_batches),
    }
    return SimEstimate(
        mean=mean_v,
        variance=var_v,
        covariance=cov_v,
        correlation=corr_v,
        std_errors=se,
        bias_bound=config.bias_bound,
        realizations=n,
        p1=_ratio(counts[1], counts[0]),
        p12=_ratio(counts[2], counts[0]),
    )


@dataclass(frozen=True)
class SlotCovariances:
    mean: np.ndarray
    covariance: np.ndarray
    batch_covariances: np.ndarray = field(repr=False)

    def offdiagonal_zscores(self) -> dict:
        """z-score of every off-diagonal covariance against their pooled mean.

        The standard error of each deviation comes from its per-batch
        values, which carries the dependence between pairs sharing
        realizations.
        """
        k = self.covariance.shape[0]
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        rows, cols = zip(*pairs)
        pooled = self.covariance[rows, cols].mean()
        pooled_batches = self.batch_covariances[:, rows, cols].mean(axis=1)
        out = {}
        for i, j in pairs:
            se = _batch_se(self.batch_covariances[:, i, j] - pooled_batches)
            out[(i, j)] = (self.covariance[i, j] - pooled) / se
        return out


def estimate_slot_covariances(config: SimConfig, k: int,
                              progress: TextIO | None = None) -> SlotCovariances:
    """Covariance matrix of interference in ``k`` slots over one pattern."""
    if k < 2:
        raise ValueError("need at least two slots")
    batches = _run_batches(config, k, progress)
    _, mean, cov = _merge(batches)
    per_batch = np.array([b.comoment / (b.n - 1) for b in batches if b.n >= 2])
    return SlotCovariances(mean, cov, per_batch)


# ---------------------------------------------------------------------------
# retention frequencies by planting points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RetentionEstimate:
    """Empirical retention probabilities with binomial standard errors.

    ``p11`` and ``p12r`` are arrays aligned with ``r_grid``.
    """

    r_grid: np.ndarray
    p1: float
    p12: float
    p11: np.ndarray
    p12r: np.ndarray
    se_p1: float
    se_p12: float
    se_p11: np.ndarray
    se_p12r: np.ndarray
    trials: int


def _binomial_se(p, n):
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


_CHUNK = 20_000


def _planted_trials(rng, lambda_p, d, r, n):
    """Survival of two planted points at (-r/2, 0) and (r/2, 0).

    Only Poisson points within d of a planted point can affect it, so the
    pattern is drawn on the bounding box of the two discs.  Returns boolean
    arrays (x kept in thinning 1, y kept in 1, x kept in 2, y kept in 2).
    """
    half = 0.5 * r
    w, hgt = r + 2.0 * d, 2.0 * d
    counts = rng.poisson(lambda_p * w * hgt, size=n)
    owner = np.repeat(np.arange(n), counts)
    total = owner.size
    px = rng.random(total) * w - (half + d)
    py = rng.random(total) * hgt - d
    marks = rng.random((total, 2))
    planted = rng.random((n, 2, 2))  # [trial, point (x, y), thinning]
    d2 = d * d
    near_x = (px + half) ** 2 + py**2 <= d2
    near_y = (px - half) ** 2 + py**2 <= d2
    kept = np.empty((n, 2, 2), dtype=bool)
    for which, near in enumerate((near_x, near_y)):
        for t in range(2):
            low = np.full(n, 2.0)
            np.minimum.at(low, owner[near], marks[near, t])
            if r <= d:
                # the other planted point is a neighbour too
                low = np.minimum(low, planted[:, 1 - which, t])
            kept[:, which, t] = planted[:, which, t] < low
    return kept[:, 0, 0], kept[:, 1, 0], kept[:, 0, 1], kept[:, 1, 1]


def _single_trials(rng, lambda_p, d, n):
    """Survival of one planted point at the origin in two thinnings."""
    counts = rng.poisson(lambda_p * math.pi * d * d, size=n)
    owner = np.repeat(np.arange(n), counts)
    marks = rng.random((owner.size, 2))
    planted = rng.random((n, 2))
    kept = np.empty((n, 2), dtype=bool)
    for t in range(2):
        low = np.full(n, 2.0)
        np.minimum.at(low, owner, marks[:, t])
        kept[:, t] = planted[:, t] < low
    return kept[:, 0], kept[:, 1]


def _chunks(total):
    return [(lo, min(lo + _CHUNK, total)) for lo in range(0, total, _CHUNK)]


def estimate_retention_probs(config: SimConfig, r_grid) -> RetentionEstimate:
    """Empirical p1, p12, p11(r), p12r(r) from ``config.realizations`` trials each.

    p1 and p12 plant one point, the pair probabilities plant two points r
    apart; the Poisson points are drawn only where they can kill a planted
    point, so no window truncation is involved.
    """
    r_grid = np.asarray(r_grid, dtype=float).reshape(-1)
    if np.any(r_grid <= 0):
        raise ValueError("distances must be positive")
    p = config.params
    n = config.realizations
    s1 = s12 = 0
    for c, (lo, hi) in enumerate(_chunks(n)):
        rng = np.random.default_rng([config.seed, 0, c])
        k1, k2 = _single_trials(rng, p.lambda_p, p.d, hi - lo)
        s1 += int(k1.sum())
        s12 += int((k1 & k2).sum())
    p11 = np.empty(r_grid.size)
    p12r = np.empty(r_grid.size)
    for idx, r in enumerate(r_grid):
        both = cross = 0
        for c, (lo, hi) in enumerate(_chunks(n)):
            rng = np.random.default_rng([config.seed, 1 + idx, c])
            x1, y1, _, y2 = _planted_trials(rng, p.lambda_p, p.d, r, hi - lo)
            both += int((x1 & y1).sum())
            cross += int((x1 & y2).sum())
        p11[idx] = both / n
        p12r[idx] = cross / n
    est_p1, est_p12 = s1 / n, s12 / n
    return RetentionEstimate(
        r_grid=r_grid,
        p1=est_p1,
        p12=est_p12,
        p11=p11,
        p12r=p12r,
        se_p1=_binomial_se(est_p1, n),
        se_p12=_binomial_se(est_p12, n),
        se_p11=np.array([_binomial_se(v, n) for v in p11]),
        se_p12r=np.array([_binomial_se(v, n) for v in p12r]),
        trials=n,
    )


def matched_aloha(config: SimConfig) -> SimConfig:
    """Same run with senders picked independently with probability p1."""
    return SimConfig(config.params, config.window, config.realizations, config.seed,
                     config.batch, config.threads, "aloha", config.bias_budget)

