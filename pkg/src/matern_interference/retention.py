"""Retention probabilities of Matérn type-II thinning.

Every probability is an integral over the marks of the involved points,
which are uniform on [0, 1].  p12 and p12r integrate those mark integrands
numerically on the unit square by default and p11 uses its closed form; the
other route is always available through ``method`` as a cross-check.

All forms are written with the intensity of the parent Poisson process.
``convention="printed"`` swaps in the thinned intensity where the closed
forms of p12 and p11 carry the parent one.  That variant disagrees with
simulation and is kept only to show it; do not use it for results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import (
    EULER_GAMMA,
    exp_scaled_ei,
    integrate_2d_unit_square,
)

__all__ = [
    "HardcoreGeometry",
    "RetentionProbabilities",
    "gamma_overlap",
    "gamma_union",
    "p1",
    "p11",
    "p12",
    "p12r",
    "p12r_short_range_limit",
    "pair_cross_density",
    "product_density2",
    "retained_intensity",
    "retention_probabilities",
]

DEFAULT_REL_TOL = 1e-6
DEFAULT_ABS_TOL = 1e-10
_METHODS = ("quadrature", "closed")
_CONVENTIONS = ("lambda_p", "printed")


@dataclass(frozen=True)
class HardcoreGeometry:
    d: float

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError("hard-core distance must be non-negative")

    @property
    def area(self) -> float:
        """Sensing area pi d^2 of one node."""
        return math.pi * self.d**2


@dataclass(frozen=True)
class RetentionProbabilities:
    p1: float
    p12: float
    lam: float


def gamma_overlap(r, d):
    """Area of the lens shared by two radius-d discs whose centres are r apart."""
    r = np.asarray(r, dtype=float)
    d = float(d)
    if d == 0:
        out = np.zeros_like(r)
    else:
        x = np.clip(r / (2.0 * d), 0.0, 1.0)
        out = 2.0 * d * d * np.arccos(x) - 0.5 * r * np.sqrt(np.maximum(4.0 * d * d - r * r, 0.0))
        out = np.where(r >= 2.0 * d, 0.0, np.maximum(out, 0.0))
    return out if out.ndim else float(out)


def gamma_union(r, d):
    """Area covered by the union of the two discs."""
    out = 2.0 * math.pi * float(d) ** 2 - np.asarray(gamma_overlap(r, d))
    return out if out.ndim else float(out)


def _check(method, convention):
    if method not in _METHODS:
        raise ValueError(f"method must be one of {_METHODS}")
    if convention not in _CONVENTIONS:
        raise ValueError(f"convention must be one of {_CONVENTIONS}")


def _check_intensity(lambda_p, d):
    if not lambda_p >= 0:
        raise ValueError("intensity must be non-negative")
    if not d >= 0:
        raise ValueError("hard-core distance must be non-negative")


def p1(lambda_p: float, d: float) -> float:
    """Probability that a point survives one thinning: (1 - e^-a) / a, a = lambda_p pi d^2."""
    _check_intensity(lambda_p, d)
    a = lambda_p * math.pi * d * d
    if a < 1e-8:
        return 1.0 - a / 2.0 + a * a / 6.0
    return -math.expm1(-a) / a


def retained_intensity(lambda_p: float, d: float) -> float:
    return lambda_p * p1(lambda_p, d)


def _closed_intensity(lambda_p, d, convention):
    # the mark integrals carry the parent intensity; "printed" swaps in the thinned one
    return lambda_p if convention == "lambda_p" else retained_intensity(lambda_p, d)


def _p12_closed(a):
    if a == 0:
        return 1.0
    if a <= 40.0:
        # Ei(a) - ln a - gamma as its (positive-term) power series
        term, total, k = 1.0, 0.0, 1
        while True:
            term *= a / k
            total += term / k
            if k > a and term / k < 1e-17 * total:
                break
            k += 1
        return math.exp(-a) * total / a
    return (exp_scaled_ei(a) - math.exp(-a) * (math.log(a) + EULER_GAMMA)) / a


def p12(
    lambda_p: float,
    d: float,
    method: str = "quadrature",
    convention: str = "lambda_p",
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> float:
    """Probability that a point survives two independent thinnings."""
    _check(method, convention)
    _check_intensity(lambda_p, d)
    a = _closed_intensity(lambda_p, d, convention) * math.pi * d * d
    if a == 0:
        return 1.0
    if method == "closed":
        return _p12_closed(a)
    res = integrate_2d_unit_square(
        lambda u, v: np.exp(-(u + v - u * v) * a), rel_tol, abs_tol
    )
    return res.value


def _p11_closed(r, lam, d):
    # 2 (phi(x1) - phi(x2)) / (x2 - x1) with phi(x) = (1 - e^-x) / x,
    # x1 = lam pi d^2 and x2 = lam * union area
    x1 = lam * math.pi * d * d
    x2 = lam * gamma_union(r, d)
    if x2 <= 0.5:
        # divided-difference series; h = sum_j x1^j x2^(k-1-j)
        total, h, p1k, fact, sign = 0.5, 1.0, 1.0, 2.0, -1.0
        for k in range(2, 40):
            p1k *= x1
            h = x2 * h + p1k
            fact *= k + 1
            term = h / fact
            total += sign * term
            sign = -sign
            if term < 1e-17 * total:
                break
        return 2.0 * total
    phi1 = -math.expm1(-x1) / x1
    phi2 = -math.expm1(-x2) / x2
    return 2.0 * (phi1 - phi2) / (x2 - x1)


def p11(
    r: float,
    lambda_p: float,
    d: float,
    method: str = "closed",
    convention: str = "lambda_p",
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> float:
    """Probability that two points r apart both survive the same thinning.

    Zero for r <= d.  Beyond 2d the two killing discs are disjoint, the mark
    integral factorises and the value is exactly p1^2.  The closed form is the
    default here; ``method="quadrature"`` integrates the mark integrand.
    """
    _check(method, convention)
    _check_intensity(lambda_p, d)
    if r < 0:
        raise ValueError("distance must be non-negative")
    if r <= d:
        return 0.0
    lam = _closed_intensity(lambda_p, d, convention)
    if r > 2.0 * d or lam == 0:
        return p1(lam, d) ** 2
    if method == "closed":
        return _p11_closed(r, lam, d)
    overlap = gamma_overlap(r, d)
    own = lam * (math.pi * d * d - overlap)
    shared = lam * overlap
    res = integrate_2d_unit_square(
        lambda u, v: np.exp(-(u + v) * own - np.maximum(u, v) * shared),
        rel_tol, abs_tol, split_diagonal=True,
    )
    return res.value


def _p12r_long_closed(a, b):
    # a = lambda_p pi d^2, b = lambda_p * overlap; Ei terms scaled by e^{-x}
    # so that large a^2/b does not overflow
    s = a - b
    return (
        exp_scaled_ei(a * a / b)
        - 2.0 * math.exp(-a) * exp_scaled_ei(a * s / b)
        + math.exp(-(2.0 * a - b)) * exp_scaled_ei(s * s / b)
    ) / b


def _p12r_short_closed(a, b):
    # antiderivative in k = a - u b of (1-u) e^{-ua} (k - 1 + e^{-k}) / k^2
    beta = a / b
    q = b - a
    scale = a * a / b

    def F(k):
        # every e^{x} is carried as e^{x - scale}
        e1 = math.exp(beta * k - scale)
        e2 = math.exp((beta - 1.0) * k - scale)
        ei1 = exp_scaled_ei(beta * k) * e1
        ei2 = exp_scaled_ei((beta - 1.0) * k) * e2
        return (
            e1 / beta
            + q * e1 / k
            + (q - 1.0 - q * beta) * ei1
            + (1.0 + q * (beta - 1.0)) * ei2
            - q * e2 / k
        )

    return (F(a) - F(a - b)) / (b * b)


def p12r(
    r: float,
    lambda_p: float,
    d: float,
    method: str = "quadrature",
    branch: str | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> float:
    """Probability that x survives one thinning and y, r away, an independent one.

    For r <= d each point lies in the other's killing disc, so x must outrank
    y in the first thinning and y must outrank x in the second.  ``branch``
    forces the ``"long"`` (r > d) or ``"short"`` (r <= d) expression regardless
    of r; it is used to study the limits of each branch.
    """
    if method not in _METHODS:
        raise ValueError(f"method must be one of {_METHODS}")
    _check_intensity(lambda_p, d)
    if not r > 0:
        raise ValueError("distance must be positive")
    if branch is None:
        branch = "long" if r > d else "short"
    if branch not in ("long", "short"):
        raise ValueError("branch must be 'long' or 'short'")
    if branch == "long" and r > 2.0 * d:
        return p1(lambda_p, d) ** 2
    if d == 0 or lambda_p == 0:
        return 1.0 if branch == "long" else 0.25

    a = lambda_p * math.pi * d * d
    b = lambda_p * gamma_overlap(r, d)
    if method == "closed":
        return _p12r_long_closed(a, b) if branch == "long" else _p12r_short_closed(a, b)

    if branch == "long":
        def f(u, v):
            return np.exp(-(u + v) * a + u * v * b)
    else:
        def f(u, v):
            return np.exp(-(u + v) * a + u * v * b) * (1.0 - u) * (1.0 - v)
    return integrate_2d_unit_square(f, rel_tol, abs_tol).value


def p12r_short_range_limit(lambda_p: float, d: float) -> float:
    """Limit of the short-range branch of p12r as r -> 0.

    Equals (1 - e^-a (1 + Ei(a) - ln a - gamma)) / a^2 with a = lambda_p pi d^2.
    """
    _check_intensity(lambda_p, d)
    a = lambda_p * math.pi * d * d
    if a < 1e-6:
        return 0.25 - a / 6.0
    # e^-a (Ei(a) - ln a - gamma) is a * p12
    return (1.0 - math.exp(-a) - a * _p12_closed(a)) / (a * a)


def product_density2(r: float, lambda_p: float, d: float, **kw) -> float:
    """Second-order product density lambda_p^2 p11(r) of the thinned process."""
    return lambda_p * lambda_p * p11(r, lambda_p, d, **kw)


def pair_cross_density(r: float, lambda_p: float, d: float, **kw) -> float:
    """Density of pairs r apart retained in two independent thinnings."""
    return lambda_p * lambda_p * p12r(r, lambda_p, d, **kw)


def retention_probabilities(lambda_p: float, d: float, **kw) -> RetentionProbabilities:
    one = p1(lambda_p, d)
    return RetentionProbabilities(p1=one, p12=p12(lambda_p, d, **kw), lam=lambda_p * one)
