"""Approximation-parameter functions for polytope and sphere-net constructions.

Barvinok's pair (kappa, theta) solves, for tau > 1::

    (1 + k) / (2 k) * h(k / (1 + k)) = ln(tau + sqrt(tau^2 - 1))
    (1 + k) * h(k / (1 + k))         = theta

with h the binary entropy in nats. The Gaussian pair comes from
tau = 1 / cos(phi), theta = ln(1 / sin(phi)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DomainError

_MAX_EXPANSIONS = 1000


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p={p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def _theta_of_kappa(k: float) -> float:
    # (1+k) h(k/(1+k)) = k ln((1+k)/k) + ln(1+k), written without cancellation
    return k * math.log1p(1.0 / k) + math.log1p(k)


def _lhs6(k: float) -> float:
    """Left side of the tau equation; strictly decreasing from +inf to 0."""
    return _theta_of_kappa(k) / (2.0 * k)


def _arccosh(tau: float) -> float:
    return math.log(tau + math.sqrt(tau * tau - 1.0))


def _bisect_log(f, target: float, increasing: bool, lo: float = 1.0, hi: float = 1.0,
                width: float = 1e-12) -> float:
    """Solve f(x) = target for x > 0, bisecting on ln x.

    The bracket is grown geometrically from [lo, hi] until it straddles the
    root, then halved until its relative width drops below ``width``.
    """
    sign = 1.0 if increasing else -1.0

    def g(x):
        return sign * (f(x) - target)

    for _ in range(_MAX_EXPANSIONS):
        if g(lo) <= 0:
            break
        lo /= 2.0
    else:
        raise ConvergenceFailure("could not bracket root from below")
    for _ in range(_MAX_EXPANSIONS):
        if g(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise ConvergenceFailure("could not bracket root from above")
    a, b = math.log(lo), math.log(hi)
    while b - a > width:
        m = 0.5 * (a + b)
        if g(math.exp(m)) < 0:
            a = m
        else:
            b = m
    return math.exp(0.5 * (a + b))


@dataclass(frozen=True)
class BarvinokParams:
    tau: float
    kappa: float
    theta: float

    def residuals(self) -> tuple[float, float]:
        """Absolute residuals of the two defining equations."""
        k = self.kappa
        h = binary_entropy(k / (1.0 + k))
        r6 = (1.0 + k) / (2.0 * k) * h - math.log(self.tau + math.sqrt(self.tau**2 - 1))
        r7 = (1.0 + k) * h - self.theta
        return abs(r6), abs(r7)


@dataclass(frozen=True)
class GaussianParams:
    tau0: float
    theta0: float

    @classmethod
    def from_tau(cls, tau: float) -> GaussianParams:
        return cls(tau, theta0(tau))

    @classmethod
    def from_theta(cls, theta: float) -> GaussianParams:
        return cls(tau0(theta), theta)


def barvinok_kappa_theta(tau: float) -> BarvinokParams:
    if not tau > 1.0:
        raise DomainError(f"tau must exceed 1, got {tau}")
    target = _arccosh(tau)
    k = _bisect_log(_lhs6, target, increasing=False)
    return BarvinokParams(tau=tau, kappa=k, theta=_theta_of_kappa(k))


def barvinok_theta(tau: float) -> float:
    return barvinok_kappa_theta(tau).theta


def tau_of_theta(theta: float) -> float:
    """Inverse of tau -> theta(tau): theta is increasing in kappa, so solve there."""
    if not theta > 0.0:
        raise DomainError(f"theta must be positive, got {theta}")
    k = _bisect_log(_theta_of_kappa, theta, increasing=True)
    return math.cosh(_lhs6(k))


def theta0(tau: float) -> float:
    """-(1/2) ln(1 - tau^-2), i.e. ln(1/sin phi) at tau = 1/cos phi."""
    if not tau > 1.0:
        raise DomainError(f"tau must exceed 1, got {tau}")
    return -0.5 * math.log1p(-1.0 / (tau * tau))


def tau0(theta: float) -> float:
    """1 / sqrt(1 - exp(-2 theta))."""
    if not theta > 0.0:
        raise DomainError(f"theta must be positive, got {theta}")
    return 1.0 / math.sqrt(-math.expm1(-2.0 * theta))


def params_table(taus=(), thetas=()) -> list[dict]:
    """Rows of (tau, kappa, theta, tau0, theta0) for the ``params`` command.

    For a tau row, tau0 is reported at the Barvinok theta and theta0 at tau;
    for a theta row tau is the Barvinok inverse and tau0 the Gaussian one.
    """
    rows = []
    for t in taus:
        bp = barvinok_kappa_theta(float(t))
        rows.append(dict(tau=bp.tau, kappa=bp.kappa, theta=bp.theta,
                         tau0=tau0(bp.theta), theta0=theta0(bp.tau)))
    for th in thetas:
        t = tau_of_theta(float(th))
        bp = barvinok_kappa_theta(t) if t > 1.0 else None
        rows.append(dict(tau=t, kappa=bp.kappa if bp else float("nan"),
                         theta=float(th), tau0=tau0(float(th)),
                         theta0=theta0(t) if t > 1.0 else float("nan")))
    return rows


def log_tau_grid(lo: float = 1e-3, hi: float = 1e2, num: int = 50) -> np.ndarray:
    """tau values with tau - 1 log-spaced on [lo, hi]."""
    return 1.0 + np.geomspace(lo, hi, num)
