import io
import math

import numpy as np
import pytest

from matern_interference import analytics, retention
from matern_interference.analytics import ModelParams
from matern_interference.montecarlo import (
    THREADS_ENV,
    SimConfig,
    default_threads,
    default_window,
    estimate_retention_probs,
    estimate_slot_covariances,
    estimate_stats,
    matched_aloha,
    simulate_interference_pair,
    simulate_slots,
    truncation_bias_bound,
    windowed_mean,
)
from matern_interference.pointprocess import Window


def replica(params, window, rng, k):
    """Numpy re-implementation of one realization, same random stream order."""
    lp, d = params.lambda_p, params.d
    r0 = window.radius + window.guard
    h = max(d, 1 / math.sqrt(lp))
    off, side = r0 + h, 2 * r0
    total = rng.poisson(lp * side * side)
    xy = rng.random(2 * total).reshape(total, 2) * side - r0
    xy = xy[(xy**2).sum(1) <= r0 * r0]
    ix = np.floor((xy[:, 0] + off) / h).astype(int)
    iy = np.floor((xy[:, 1] + off) / h).astype(int)
    xy = xy[np.lexsort((iy, ix))]
    n = len(xy)
    marks = rng.random((n, k))
    diff = xy[:, None, :] - xy[None, :, :]
    near = ((diff**2).sum(-1) <= d * d) & ~np.eye(n, dtype=bool)
    out = np.zeros(k)
    for i in range(n):
        r2 = xy[i] @ xy[i]
        if r2 > window.radius**2:
            continue
        for t in range(k):
            if np.all(marks[near[i], t] >= marks[i, t]):
                g = 1.0 if r2 <= 1 else r2 ** (-0.5 * params.alpha)
                fade = 1.0 if math.isinf(params.m) else rng.standard_gamma(params.m) / params.m
                out[t] += g * fade
    return out


@pytest.mark.parametrize("m, k", [(1.5, 3), (1.0, 2), (math.inf, 2), (0.5, 1)])
def test_kernel_matches_numpy_replica(m, k):
    p = ModelParams(1.0, 1.0, 3.0, m)
    w = default_window(p, 6.0)
    for s in range(4):
        got = simulate_slots(p, w, np.random.default_rng([9, s]), k)
        ref = replica(p, w, np.random.default_rng([9, s]), k)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=0)


def test_empty_network():
    p = ModelParams(1e-9, 1.0, 3.0, 1.0)
    assert simulate_interference_pair(p, default_window(p, 5.0), np.random.default_rng(0)) == (0.0, 0.0)


def test_no_thinning_no_fading_gives_equal_slots():
    p = ModelParams(1.0, 0.0, 3.0, math.inf)
    i1, i2 = simulate_interference_pair(p, default_window(p, 8.0), np.random.default_rng(1))
    assert i1 == i2 > 0


def test_guard_must_cover_d():
    p = ModelParams(1.0, 1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        simulate_slots(p, Window(10.0, 0.5), np.random.default_rng(0), 2)
    with pytest.raises(ValueError):
        SimConfig(p, Window(10.0, 0.5), 100)


@pytest.mark.parametrize("kw", [dict(realizations=1), dict(realizations=10, threads=0),
                                dict(realizations=10, model="csma"),
                                dict(realizations=10, seed=-1),
                                dict(realizations=10, bias_budget=1e-3)])
def test_config_validation(kw):
    p = ModelParams(1.0, 1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(p, default_window(p, 50.0), **kw)


def test_bias_helpers():
    p = ModelParams(1.0, 1.0, 3.0, 1.0)
    full = analytics.mean_interference(p)
    for radius in (2.0, 50.0, 500.0):
        assert windowed_mean(p, radius) + truncation_bias_bound(p, radius) == pytest.approx(full)
    assert windowed_mean(p, 0.5) == pytest.approx(p.lam * math.pi / 4)


def test_default_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert default_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert default_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ValueError):
        default_threads()


def small_config(**kw):
    p = kw.pop("params", ModelParams(1.0, 1.0, 3.0, 1.0))
    radius = kw.pop("radius", 10.0)
    return SimConfig(p, default_window(p, radius), **kw)


def test_deterministic_across_threads():
    a = estimate_stats(small_config(realizations=400, seed=5, threads=1))
    b = estimate_stats(small_config(realizations=400, seed=5, threads=4))
    assert a == b
    c = estimate_stats(small_config(realizations=400, seed=6, threads=1))
    assert c.mean != a.mean


def test_progress_lines():
    buf = io.StringIO()
    # 100 batches of 10; a line once each multiple of 250 is passed
    estimate_stats(small_config(realizations=1000, batch=250, radius=4.0), progress=buf)
    lines = buf.getvalue().splitlines()
    assert lines == [f"progress {n}/1000 realizations" for n in (250, 500, 750, 1000)]


def test_mean_matches_windowed_value():
    p = ModelParams(1.0, 1.0, 3.0, 1.0)
    cfg = SimConfig(p, default_window(p, 50.0), 10_000, seed=11)
    est = estimate_stats(cfg)
    assert abs(est.mean - windowed_mean(p, 50.0)) < 3 * est.std_errors["mean"]
    # against the infinite-plane mean the gap is the truncation bias
    assert abs(est.mean - analytics.mean_interference(p)) < est.bias_bound + 3 * est.std_errors["mean"]


def test_poisson_limit_correlation():
    # the d -> 0 correlation m / (m + 1) does not depend on the window
    est = estimate_stats(small_config(params=ModelParams(1.0, 1e-3, 3.0, 1.0),
                                      realizations=20_000, seed=12))
    assert abs(est.correlation - 0.5) < 3 * est.std_errors["correlation"]


def test_harvested_retention_frequencies():
    est = estimate_stats(small_config(radius=15.0, realizations=4000, seed=13))
    assert abs(est.p1 - retention.p1(1.0, 1.0)) < 3 * est.std_errors["p1"]
    assert abs(est.p12 - retention.p12(1.0, 1.0)) < 3 * est.std_errors["p12"]


def test_truncation_control():
    p = ModelParams(1.0, 1.0, 3.0, 1.0)
    small = estimate_stats(SimConfig(p, default_window(p, 10.0), 5000, seed=14))
    big = estimate_stats(SimConfig(p, default_window(p, 20.0), 5000, seed=14))
    sigma = math.hypot(small.std_errors["mean"], big.std_errors["mean"])
    assert abs(big.mean - small.mean) < small.bias_bound + 3 * sigma


def test_matched_aloha_mean():
    cfg = small_config(realizations=10_000, seed=15)
    mpp = estimate_stats(cfg)
    ppp = estimate_stats(matched_aloha(cfg))
    sigma = math.hypot(mpp.std_errors["mean"], ppp.std_errors["mean"])
    assert abs(mpp.mean - ppp.mean) < 3 * sigma
    # the ALOHA network is far more correlated than the Matérn one
    expected = analytics.poisson_baseline_correlation(cfg.params.p1, 1.0)
    assert abs(ppp.correlation - expected) < 3 * ppp.std_errors["correlation"]
    assert ppp.correlation > mpp.correlation + 3 * mpp.std_errors["correlation"]


def test_slot_covariances_shape_and_symmetry():
    cov = estimate_slot_covariances(small_config(realizations=400, seed=16), 3)
    assert cov.covariance.shape == (3, 3)
    np.testing.assert_allclose(cov.covariance, cov.covariance.T)
    assert set(cov.offdiagonal_zscores()) == {(0, 1), (0, 2), (1, 2)}
    with pytest.raises(ValueError):
        estimate_slot_covariances(small_config(realizations=10), 1)


def test_planted_retention_examples():
    p = ModelParams(1.0, 0.4, 3.0, 1.0)
    est = estimate_retention_probs(SimConfig(p, default_window(p, 5.0), 40_000, seed=17), [0.3, 1.0])
    assert est.p11[0] == 0.0
    assert abs(est.p1 - 0.78598) < 3 * est.se_p1
    one = retention.p1(1.0, 0.4)
    assert abs(est.p12r[1] - one**2) < 3 * est.se_p12r[1]
    assert abs(est.p11[1] - one**2) < 3 * est.se_p11[1]
    with pytest.raises(ValueError):
        estimate_retention_probs(SimConfig(p, default_window(p, 5.0), 10), [0.0])


def test_planted_short_range_cross_probability():
    p = ModelParams(1.0, 1.0, 3.0, 1.0)
    est = estimate_retention_probs(SimConfig(p, default_window(p, 5.0), 40_000, seed=18), [0.5])
    ref = retention.p12r(0.5, 1.0, 1.0)
    assert abs(est.p12r[0] - ref) < 3 * est.se_p12r[0]
