import math

import numpy as np
import pytest
from scipy import integrate

from matern_interference import analytics as A
from matern_interference import retention
from matern_interference.analytics import ModelParams

GOLDEN = ModelParams(1.0, 1.0, 3.0, 1.0)
# frozen after agreement with a 20k-realization Monte Carlo run and the direct form
GOLDEN_VARIANCE = 1.877992207125109
GOLDEN_COVARIANCE = 0.18580039633284767
GOLDEN_CORRELATION = 0.09893565885306677


def k_oracle(r, alpha):
    """K(r) in polar coordinates around one focus, by scipy."""
    def gain(s):
        return 1.0 if s <= 1.0 else s**-alpha

    def inner(rho):
        # distance to the other focus, 2r away
        def f(theta):
            return gain(math.sqrt(rho * rho + 4 * r * r + 4 * r * rho * math.cos(theta)))
        c = (1.0 - rho * rho - 4 * r * r) / (4 * r * rho) if r * rho > 0 else 2.0
        pts = [math.acos(c)] if -1.0 < c < 1.0 else None
        val, _ = integrate.quad(f, 0.0, math.pi, points=pts, epsabs=1e-14, epsrel=1e-12, limit=200)
        return 2.0 * val * rho * gain(rho)

    pts = sorted({1.0, abs(2 * r - 1.0), 2 * r + 1.0})
    total = 0.0
    edges = [0.0, *pts]
    for lo, hi in zip(edges, edges[1:]):
        if hi > lo:
            total += integrate.quad(inner, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    total += integrate.quad(inner, edges[-1], math.inf, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    return total


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(1.0, 1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(1.0, 1.0, 3.0, 0.0)
    with pytest.raises(ValueError):
        ModelParams(1.0, -1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0, 3.0, 1.0)
    p = ModelParams(1.0, 1.0, 3.0, math.inf)
    assert 0 < p.lam <= min(p.lambda_p, 1 / math.pi)


def test_mean_examples():
    lam = (1 - math.exp(-math.pi)) / math.pi
    assert A.mean_interference(GOLDEN) == pytest.approx(lam * 3 * math.pi, rel=1e-14)
    assert A.mean_interference(GOLDEN) == pytest.approx(2.8704, abs=5e-5)
    assert A.mean_interference(ModelParams(2.0, 0.0, 4.0)) == pytest.approx(2.0 * 2 * math.pi)
    assert A.mean_interference(ModelParams(1e-12, 1.0, 3.0)) < 1e-10


def test_kernel_at_zero():
    for alpha in (2.5, 3.0, 4.0):
        assert A.pair_gain_integral(0.0, alpha).value == pytest.approx(alpha * math.pi / (alpha - 1))


@pytest.mark.parametrize("r", [0.05, 0.3, 0.5, 0.75, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("alpha", [3.0, 4.5])
def test_kernel_against_polar_oracle(r, alpha):
    got = A.pair_gain_integral(r, alpha)
    ref = k_oracle(r, alpha)
    assert got.value == pytest.approx(ref, rel=1e-8)
    assert abs(got.value - ref) <= max(10 * got.abs_error, 1e-12 * ref)


def test_mu_cutoff_bounds_tail():
    r, alpha, tol = 0.7, 3.0, 1e-12
    cut = A.elliptic_mu_cutoff(r, alpha, tol)
    assert math.cosh(cut) >= 2.0 and r * (math.cosh(cut) - 1) >= 1.0
    # the true tail beyond the cutoff, by brute force
    def f(nu, mu):
        s1 = r * (math.cosh(mu) + math.cos(nu))
        s2 = r * (math.cosh(mu) - math.cos(nu))
        g = lambda s: 1.0 if s <= 1 else s**-alpha
        return 4 * r * r * g(s1) * g(s2) * (math.sinh(mu) ** 2 + math.sin(nu) ** 2)
    tail, _ = integrate.dblquad(f, cut, cut + 20, 0.0, math.pi / 2, epsabs=1e-20)
    assert tail < tol


def test_golden_values():
    s = A.interference_stats(GOLDEN)
    assert s.mean == pytest.approx(2.8703582452086827, rel=1e-14)
    assert s.variance == pytest.approx(GOLDEN_VARIANCE, rel=1e-9)
    assert s.covariance == pytest.approx(GOLDEN_COVARIANCE, rel=1e-9)
    assert s.correlation == pytest.approx(GOLDEN_CORRELATION, rel=1e-9)
    for key in ("variance", "covariance", "correlation"):
        assert 0 < s.errors[key] < 1e-4


@pytest.mark.parametrize("params", [
    GOLDEN,
    ModelParams(0.5, 0.5, 3.0, 2.0),
    ModelParams(2.0, 0.7, 4.0, 0.5),
    ModelParams(1.0, 2.0, 2.5, 1.0),
])
def test_difference_and_direct_forms_agree(params):
    for fn in (A.variance_interference, A.covariance_interference):
        diff = fn(params)
        direct = fn(params, form="direct")
        assert abs(diff.value - direct.value) <= diff.abs_error + direct.abs_error
        assert diff.value == pytest.approx(direct.value, rel=1e-6)


def test_unknown_form():
    with pytest.raises(ValueError):
        A.variance_interference(GOLDEN, form="raw")


def test_variance_lower_limit_matters():
    # the pair term of the variance is negative: nearby pairs are missing
    single = GOLDEN.lam * 2.0 * 1.5 * math.pi
    assert A.variance_interference(GOLDEN).value < single


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 1e4, math.inf])
def test_poisson_limit(m):
    p = ModelParams(1.0, 1e-6, 3.0, m)
    g = 1.0 if math.isinf(m) else (m + 1) / m
    var = A.variance_interference(p).value
    assert var == pytest.approx(p.lam * g * 3 * math.pi / 2, rel=1e-3)
    assert A.covariance_interference(p).value == pytest.approx(3 * math.pi / 2, rel=1e-3)
    expected_rho = 1.0 if math.isinf(m) else m / (m + 1)
    assert A.correlation_interference(p).value == pytest.approx(expected_rho, abs=1e-2)


def test_zero_distance_is_exact():
    p = ModelParams(1.0, 0.0, 3.0, 2.0)
    s = A.interference_stats(p)
    assert s.variance == pytest.approx(1.5 * 1.5 * math.pi)
    assert s.correlation == pytest.approx(2.0 / 3.0)


def test_bounds_and_ratio():
    for p in (GOLDEN, ModelParams(0.3, 1.5, 3.5, 0.5), ModelParams(3.0, 0.4, 2.6, 6.0)):
        s = A.interference_stats(p)
        assert s.variance > 0
        assert 0 <= s.covariance <= s.variance
        assert 0 <= s.correlation <= 1
        assert s.correlation == pytest.approx(s.covariance / s.variance, rel=1e-14)


def test_covariance_ignores_fading_bitwise():
    a = A.covariance_interference(ModelParams(1.0, 1.0, 3.0, 0.5))
    b = A.covariance_interference(ModelParams(1.0, 1.0, 3.0, 6.0))
    assert a.value == b.value and a.abs_error == b.abs_error


def test_correlation_increases_with_p1():
    for m in (0.5, 1.0, 1e4):
        ds = np.linspace(2.0, 0.2, 10)
        rho = [A.correlation_interference(ModelParams(1.0, d, 3.0, m)).value for d in ds]
        assert all(a < b for a, b in zip(rho, rho[1:]))


def test_endpoint_matches_baseline():
    for m in (0.5, 1.0, 2.0):
        p = ModelParams(1.0, 1e-4, 3.0, m)
        assert A.correlation_interference(p).value == pytest.approx(m / (m + 1), abs=1e-3)
        assert A.poisson_baseline_stats(p).correlation == pytest.approx(m / (m + 1), abs=1e-3)


def test_correlation_increases_and_flattens_in_m():
    ms = np.geomspace(0.5, 100, 12)
    rho = [A.correlation_interference(ModelParams(1.0, 0.8, 3.0, m)).value for m in ms]
    steps = np.diff(rho)
    assert np.all(steps > 0)
    # sigmoidal in log m: steps shrink past the inflection towards the no-fading value
    top = int(np.argmax(steps))
    assert np.all(np.diff(steps[top:]) < 0)
    assert steps[-1] < 0.2 * steps[top]
    limit = A.correlation_interference(ModelParams(1.0, 0.8, 3.0, 1e4)).value
    assert 0 < limit - rho[-1] < 0.03


def test_alpha_insensitivity():
    rho = [A.correlation_interference(ModelParams(1.0, 1.0, a, 1.0)).value
           for a in np.linspace(3, 5, 9)]
    assert max(rho) - min(rho) < 0.05


def test_decreasing_in_d():
    ds = np.linspace(0.2, 3.0, 12)
    rho = [A.correlation_interference(ModelParams(1.0, d, 3.0, 1.0)).value for d in ds]
    assert all(a > b for a, b in zip(rho, rho[1:]))
    assert rho[-1] < 0.05


def test_decreasing_in_lambda():
    lps = np.linspace(0.1, 2.0, 10)
    rho = [A.correlation_interference(ModelParams(lp, 1.0, 3.0, 1.0)).value for lp in lps]
    assert all(a > b for a, b in zip(rho, rho[1:]))


def test_baseline():
    assert A.poisson_baseline_correlation(1.0, 1.0) == 0.5
    assert A.poisson_baseline_correlation(0.0, 3.0) == 0.0
    assert A.poisson_baseline_correlation(0.78598, 2.0) == pytest.approx(0.52399, abs=5e-6)
    with pytest.raises(ValueError):
        A.poisson_baseline_correlation(1.5, 1.0)
    for p in (GOLDEN, ModelParams(2.0, 0.3, 4.0, 0.5)):
        base = A.poisson_baseline_stats(p)
        assert base.mean == A.mean_interference(p)
        assert base.correlation == pytest.approx(base.covariance / base.variance)


def test_baseline_independent_of_alpha_and_lambda():
    ref = A.poisson_baseline_stats(ModelParams(1.0, 1.0, 3.0, 2.0)).correlation
    for lp in (0.5, 2.0):
        for alpha in (2.5, 4.0):
            p = ModelParams(lp, math.sqrt(1.0 / lp), alpha, 2.0)  # same p1
            assert A.poisson_baseline_stats(p).correlation == pytest.approx(ref, rel=1e-12)


def test_full_send_baseline_equals_ppp():
    p = ModelParams(1.0, 0.0, 3.0, 1.0)
    assert A.poisson_baseline_stats(p).variance == pytest.approx(A.variance_interference(p).value)


def test_deterministic():
    p = ModelParams(0.7, 0.9, 3.3, 1.0)
    assert A.interference_stats(p) == A.interference_stats(p)
    assert retention.p12(0.7, 0.9) == retention.p12(0.7, 0.9)
