"""Mean, variance, temporal covariance and correlation of interference.

Interference is measured at the origin, which is not itself a node.  The
pair terms reduce to

    8 pi * int K(r) * density(2 r) * r dr,

where K(r) = int_{R^2} l(|x + a|) l(|x - a|) dx for |a| = r is computed in
elliptic coordinates, x = (r cosh mu cos nu, r sinh mu sin nu).

The default ``form="difference"`` integrates density(2 r) - lambda^2 instead
of the density itself.  The constant part integrates to E[I]^2 in closed
form, so the subtraction of E[I]^2 happens analytically and the remaining
integrand vanishes for r > d.  ``form="direct"`` integrates the density
over the half line and subtracts E[I]^2 afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import retention
from .channel import fading_moment2, validate_alpha, validate_m
from .quadrature import QuadratureResult, integrate_1d, integrate_batch

__all__ = [
    "InterferenceStats",
    "ModelParams",
    "correlation_interference",
    "covariance_interference",
    "elliptic_mu_cutoff",
    "interference_stats",
    "mean_interference",
    "pair_gain_integral",
    "poisson_baseline_correlation",
    "poisson_baseline_stats",
    "variance_interference",
]

KERNEL_REL_TOL = 1e-9
KERNEL_ABS_TOL = 1e-13
OUTER_REL_TOL = 1e-5
OUTER_ABS_TOL = 1e-10
FORMS = ("difference", "direct")


@dataclass(frozen=True)
class ModelParams:
    lambda_p: float
    d: float
    alpha: float
    m: float = 1.0

    def __post_init__(self):
        if not self.lambda_p > 0:
            raise ValueError(f"intensity must be positive, got {self.lambda_p}")
        if not self.d >= 0:
            raise ValueError(f"hard-core distance must be non-negative, got {self.d}")
        validate_alpha(self.alpha)
        validate_m(self.m)

    @property
    def p1(self) -> float:
        return retention.p1(self.lambda_p, self.d)

    @property
    def lam(self) -> float:
        """Intensity of the thinned (sender) process."""
        return self.lambda_p * self.p1


@dataclass(frozen=True)
class InterferenceStats:
    mean: float
    variance: float
    covariance: float
    correlation: float
    errors: dict = field(default_factory=dict)


def mean_interference(params: ModelParams) -> float:
    """E[I] = lambda * alpha pi / (alpha - 2)."""
    return params.lam * params.alpha * math.pi / (params.alpha - 2.0)


def _gain_moment2(alpha):
    # int l(|x|)^2 dx over the plane
    return alpha * math.pi / (alpha - 1.0)


# ---------------------------------------------------------------------------
# K(r) in elliptic coordinates
# ---------------------------------------------------------------------------


def elliptic_mu_cutoff(r: float, alpha: float, tol: float) -> float:
    """Upper mu limit beyond which the elliptic integrand adds less than ``tol``.

    Once r (cosh mu - 1) >= 1 both path gains follow the power law, and with
    cosh mu >= 2 one has cosh mu - 1 >= cosh mu / 2 and cosh mu <= e^mu.  The
    integrand of K(r) = 2 r^2 int int (...) is then bounded by
    pi 4^alpha r^(-2 alpha) cosh(mu)^(2 - 2 alpha) <= C e^{-(2 alpha - 2) mu},
    so the tail beyond M is at most

        2 pi r^(2 - 2 alpha) 2^(4 alpha - 2) e^{-(2 alpha - 2) M} / (2 alpha - 2).
    """
    rate = 2.0 * alpha - 2.0
    log_c = (
        math.log(2.0 * math.pi / rate)
        + (2.0 - 2.0 * alpha) * math.log(r)
        + (4.0 * alpha - 2.0) * math.log(2.0)
    )
    m = (log_c - math.log(tol)) / rate
    return max(m, math.acosh(max(2.0, 1.0 + 1.0 / r)))


def _gain(s, alpha):
    return np.exp(-alpha * np.log(np.maximum(s, 1.0)))


def _nu_integrals(mus, r, alpha, rel_tol, abs_tol):
    """Inner nu integral over [0, pi/2] for every mu in ``mus``."""
    mus = np.asarray(mus, dtype=float)
    flat = mus.ravel()
    ch = np.cosh(flat)
    inv = 1.0 / r
    # the gain factors hit their cap where cos(nu) crosses these levels
    b1 = np.arccos(np.clip(inv - ch, 0.0, 1.0))
    b2 = np.arccos(np.clip(ch - inv, 0.0, 1.0))
    lo_b, hi_b = np.minimum(b1, b2), np.maximum(b1, b2)
    n = flat.size
    lo = np.concatenate([np.zeros(n), lo_b, hi_b])
    hi = np.concatenate([lo_b, hi_b, np.full(n, 0.5 * math.pi)])
    owner = np.tile(np.arange(n), 3)

    def f(nu, rows):
        mu = flat[owner[rows]][:, None]
        sh2 = np.sinh(0.5 * mu) ** 2
        sn2 = np.sin(0.5 * nu) ** 2
        plus = r * (np.cosh(mu) + np.cos(nu))
        # cosh mu - cos nu without cancellation near the foci
        minus = 2.0 * r * (sh2 + sn2)
        jac = 2.0 * (np.sinh(mu) ** 2 + np.sin(nu) ** 2)
        return _gain(plus, alpha) * _gain(minus, alpha) * jac

    vals, errs = integrate_batch(f, lo, hi, rel_tol, abs_tol)
    out = np.bincount(owner, vals, n).reshape(mus.shape)
    err = np.bincount(owner, errs, n).reshape(mus.shape)
    return out, err


@lru_cache(maxsize=65536)
def _pair_gain_cached(r, alpha, rel_tol, abs_tol):
    if r == 0:
        return QuadratureResult(_gain_moment2(alpha), 0.0, 0)
    scale = 2.0 * r * r
    # kinks of the inner integral as a function of mu
    bps = [math.acosh(v) for v in (1.0 / r - 1.0, 1.0 / r, 1.0 / r + 1.0) if v > 1.0]
    upper = elliptic_mu_cutoff(r, alpha, 0.1 * abs_tol)
    inner_err = [0.0]

    def g(mu):
        vals, errs = _nu_integrals(mu, r, alpha, 1e-2 * rel_tol, 1e-2 * abs_tol / scale)
        inner_err[0] += float(np.max(errs, initial=0.0))
        return vals

    res = integrate_1d(g, 0.0, upper, rel_tol, abs_tol / scale, breakpoints=bps)
    err = scale * (res.abs_error + inner_err[0] * upper) + 0.1 * abs_tol
    return QuadratureResult(scale * res.value, err, res.evaluations)


def pair_gain_integral(r: float, alpha: float, rel_tol=KERNEL_REL_TOL, abs_tol=KERNEL_ABS_TOL):
    """K(r) = int l(|x + a|) l(|x - a|) dx over the plane, |a| = r."""
    if r < 0:
        raise ValueError("distance must be non-negative")
    validate_alpha(alpha)
    return _pair_gain_cached(float(r), float(alpha), float(rel_tol), float(abs_tol))


# ---------------------------------------------------------------------------
# pair integrals
# ---------------------------------------------------------------------------


def _density(kind, lambda_p, d):
    if kind == "variance":
        def dens(s):
            return retention.product_density2(s, lambda_p, d)
    else:
        def dens(s):
            return retention.pair_cross_density(s, lambda_p, d)
    return dens


@lru_cache(maxsize=4096)
def _pair_term(kind, lambda_p, d, alpha, form, rel_tol, abs_tol):
    """8 pi int K(r) (density(2r) [- lambda^2]) r dr with an error bound."""
    lam = retention.retained_intensity(lambda_p, d)
    dens = _density(kind, lambda_p, d)
    subtract = lam * lam if form == "difference" else 0.0
    peak = [0.0]

    def integrand(rs):
        rs = np.asarray(rs, dtype=float)
        out = np.empty(rs.shape)
        for idx, r in np.ndenumerate(rs):
            k = _kernel(r, alpha)
            out[idx] = k * (dens(2.0 * r) - subtract) * r
        peak[0] = max(peak[0], float(np.max(np.abs(out), initial=0.0)))
        return out

    # density(2r) jumps at r = d/2; K(r) has kinks at r = 1/2 and r = 1
    bps = [0.5 * d, 0.5, 1.0, d]
    if form == "difference":
        if d == 0:
            return QuadratureResult(0.0, 0.0, 0)
        lower = 0.0 if kind == "covariance" else 0.5 * d
        lo_res = QuadratureResult(0.0, 0.0, 0)
        if kind == "variance":
            # below d/2 the density is zero and the integrand is -lambda^2 K r
            lo_res = integrate_1d(
                lambda rs: _vector_k(rs, alpha) * (-subtract) * rs,
                0.0, 0.5 * d, rel_tol, abs_tol / (8 * math.pi), breakpoints=bps,
            )
        hi_res = integrate_1d(integrand, lower, d, rel_tol, abs_tol / (8 * math.pi), breakpoints=bps)
        value = lo_res.value + hi_res.value
        err = lo_res.abs_error + hi_res.abs_error
        length = d
    else:
        lower = 0.5 * d if kind == "variance" else 0.0
        bps = bps + [2.0 * d]
        # K(r) ~ r^-alpha for large r, so the integrand decays like r^(1 - alpha)
        res = integrate_1d(
            integrand, lower, math.inf, rel_tol, abs_tol / (8 * math.pi),
            breakpoints=bps, tail_decay=("algebraic", alpha - 1.0),
        )
        value, err, length = res.value, res.abs_error, max(1.0, d)
    # inner K(r) and retention quadratures carry their own relative errors
    inner_rel = max(KERNEL_REL_TOL, retention.DEFAULT_REL_TOL)
    err += inner_rel * peak[0] * length
    return QuadratureResult(8 * math.pi * value, 8 * math.pi * err, 0)


def _kernel(r, alpha):
    # K(r) decays like (2r)^-alpha; a fixed absolute tolerance would leave the
    # far tail of the direct form with no correct digits
    scale = min(1.0, (2.0 * r) ** -alpha) if r > 0 else 1.0
    return pair_gain_integral(r, alpha, KERNEL_REL_TOL, KERNEL_ABS_TOL * scale).value


def _vector_k(rs, alpha):
    rs = np.asarray(rs, dtype=float)
    out = np.empty(rs.shape)
    for idx, r in np.ndenumerate(rs):
        out[idx] = _kernel(r, alpha)
    return out


def _check_form(form):
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")


def variance_interference(
    params: ModelParams, form: str = "difference",
    rel_tol: float = OUTER_REL_TOL, abs_tol: float = OUTER_ABS_TOL,
) -> QuadratureResult:
    """var[I] with a propagated numerical error estimate."""
    _check_form(form)
    lam = params.lam
    single = lam * fading_moment2(params.m) * _gain_moment2(params.alpha)
    pair = _pair_term("variance", params.lambda_p, params.d, params.alpha, form, rel_tol, abs_tol)
    value = single + pair.value
    if form == "direct":
        value -= mean_interference(params) ** 2
    return QuadratureResult(value, pair.abs_error, pair.evaluations)


def covariance_interference(
    params: ModelParams, form: str = "difference",
    rel_tol: float = OUTER_REL_TOL, abs_tol: float = OUTER_ABS_TOL,
) -> QuadratureResult:
    """cov[I_1, I_2] between two slots; independent of the fading parameter."""
    _check_form(form)
    lp = params.lambda_p
    single = lp * retention.p12(lp, params.d) * _gain_moment2(params.alpha)
    pair = _pair_term("covariance", lp, params.d, params.alpha, form, rel_tol, abs_tol)
    value = single + pair.value
    if form == "direct":
        value -= mean_interference(params) ** 2
    return QuadratureResult(value, pair.abs_error, pair.evaluations)


def correlation_interference(params: ModelParams, form: str = "difference", **tol) -> QuadratureResult:
    """Pearson correlation cov / var of interference in two slots."""
    var = variance_interference(params, form, **tol)
    cov = covariance_interference(params, form, **tol)
    rho = cov.value / var.value
    err = abs(rho) * (cov.abs_error / abs(cov.value) + var.abs_error / var.value) if cov.value else (
        cov.abs_error / var.value
    )
    return QuadratureResult(rho, err, 0)


def interference_stats(params: ModelParams, form: str = "difference", **tol) -> InterferenceStats:
    var = variance_interference(params, form, **tol)
    cov = covariance_interference(params, form, **tol)
    rho = correlation_interference(params, form, **tol)
    return InterferenceStats(
        mean=mean_interference(params),
        variance=var.value,
        covariance=cov.value,
        correlation=rho.value,
        errors={"mean": 0.0, "variance": var.abs_error,
                "covariance": cov.abs_error, "correlation": rho.abs_error},
    )


# ---------------------------------------------------------------------------
# ALOHA (independently thinned Poisson) baseline
# ---------------------------------------------------------------------------


def poisson_baseline_correlation(p_send: float, m: float) -> float:
    """Correlation q m / (m + 1) of an ALOHA network with send probability q."""
    if not 0.0 <= p_send <= 1.0:
        raise ValueError("send probability must lie in [0, 1]")
    if not m > 0:
        raise ValueError("fading shape must be positive")
    return p_send / fading_moment2(m)


def poisson_baseline_stats(params: ModelParams) -> InterferenceStats:
    """Poisson network thinned independently with probability p1.

    Its sender intensity, and therefore its mean interference, matches the
    Matérn network built from the same parameters.
    """
    q = params.p1
    lam = params.lam
    g2 = _gain_moment2(params.alpha)
    variance = lam * fading_moment2(params.m) * g2
    covariance = q * lam * g2
    return InterferenceStats(
        mean=mean_interference(params),
        variance=variance,
        covariance=covariance,
        correlation=poisson_baseline_correlation(q, params.m),
        errors={"mean": 0.0, "variance": 0.0, "covariance": 0.0, "correlation": 0.0},
    )
