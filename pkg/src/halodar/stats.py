"""Sensing outage under fluctuating RCS, and the gamma special functions behind it.

The incomplete gamma pair is implemented locally (series for small
arguments, continued fraction otherwise) because it is the primitive
both the outage model and the exact multi-CPI detection oracle rest on;
tests cross-check it against an independent reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TOL = 1e-15
_MAX_ITER = 600


def _log_lower_gamma_series(shape: float, x: float) -> float:
    """log of the regularized lower incomplete gamma via power series (x < shape+1)."""
    term = 1.0 / shape
    total = term
    a = shape
    for _ in range(_MAX_ITER):
        a += 1.0
        term *= x / a
        total += term
        if abs(term) < abs(total) * _TOL:
            break
    else:
        raise RuntimeError(f"gamma series failed to converge for shape={shape}, x={x}")
    return shape * math.log(x) - x - math.lgamma(shape) + math.log(total)


def _upper_gamma_cf(shape: float, x: float) -> float:
    """Regularized upper incomplete gamma via Lentz continued fraction (x >= shape+1)."""
    tiny = 1e-300
    b = x + 1.0 - shape
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - shape)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _TOL:
            break
    else:
        raise RuntimeError(f"gamma continued fraction failed for shape={shape}, x={x}")
    return math.exp(shape * math.log(x) - x - math.lgamma(shape)) * h


def regularized_lower_gamma(shape: float, x: float) -> float:
    """CDF of Gamma(shape, 1) at x, i.e. the regularized lower incomplete gamma."""
    if shape <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 0.0
    if x < shape + 1.0:
        return math.exp(_log_lower_gamma_series(shape, x))
    return 1.0 - _upper_gamma_cf(shape, x)


def log_regularized_lower_gamma(shape: float, x: float) -> float:
    """log of the regularized lower incomplete gamma, stable for tiny values."""
    if x == 0.0:
        return -math.inf
    if x < shape + 1.0:
        return _log_lower_gamma_series(shape, x)
    return math.log1p(-_upper_gamma_cf(shape, x))


def _gamma_pdf(shape: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    return math.exp((shape - 1.0) * math.log(x) - x - math.lgamma(shape))


def inverse_lower_gamma(shape: float, p: float) -> float:
    """Inverse of regularized_lower_gamma in x: solves P(shape, x) = p.

    Bracketed Newton iteration with bisection fallback; the bracket is
    grown geometrically from the shape parameter (the distribution mean).
    """
    if shape <= 0:
        raise ValueError("shape must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")

    lo, hi = 0.0, shape
    while regularized_lower_gamma(shape, hi) < p:
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("inverse gamma bracket expansion failed")

    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = regularized_lower_gamma(shape, x) - p
        if f > 0:
            hi = x
        else:
            lo = x
        dfdx = _gamma_pdf(shape, x)
        if dfdx > 0.0:
            step = f / dfdx
            x_new = x - step
            if not lo < x_new < hi:
                x_new = 0.5 * (lo + hi)
        else:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-14 * max(x, 1.0):
            return x_new
        x = x_new
    return x


def outage_probability(r_target: float, r_max_det: float, k: int) -> float:
    """Probability the fluctuating detection range falls short of r_target.

    With an exponentially fluctuating RCS held constant within each CPI
    and drawn independently across the K integrated CPIs, the summed
    SNR is Gamma(K, 1)-distributed around its mean, and the outage event
    reduces to that CDF evaluated at K*(r_target/r_max_det)^4.
    """
    if r_max_det <= 0:
        raise ValueError("r_max_det must be positive")
    if r_target < 0:
        raise ValueError("r_target must be non-negative")
    if k < 1:
        raise ValueError("k must be >= 1")
    return regularized_lower_gamma(float(k), k * (r_target / r_max_det) ** 4)


def reliable_range_ratio(epsilon: float, k: int) -> float:
    """Fraction of the deterministic range available at outage tolerance epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    return (inverse_lower_gamma(float(k), epsilon) / k) ** 0.25


@dataclass(frozen=True)
class OutageCurve:
    """Outage probability versus normalized range for one integration depth."""

    k: int
    range_ratio: np.ndarray     # r_target / r_max_det grid
    p_out: np.ndarray

    def reliable_ratio(self, epsilon: float) -> float:
        return reliable_range_ratio(epsilon, self.k)


def outage_curve(k: int, ratio_grid: np.ndarray | None = None) -> OutageCurve:
    """Tabulate the outage law over a normalized range grid."""
    if ratio_grid is None:
        ratio_grid = np.linspace(0.0, 1.5, 301)
    ratio_grid = np.asarray(ratio_grid, dtype=float)
    p = np.array([outage_probability(rr, 1.0, k) for rr in ratio_grid])
    return OutageCurve(k=k, range_ratio=ratio_grid, p_out=p)
