"""Least-squares scaling-exponent fits used by every convergence study."""
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError


@dataclass(frozen=True)
class PowerFit:
    """``y ~ prefactor * x**slope`` fitted in log-log coordinates."""

    slope: float
    intercept: float
    r2: float
    n: int

    @property
    def prefactor(self):
        return float(np.exp(self.intercept))


def loglog_fit(x, y, min_points=2) -> PowerFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < min_points:
        raise InsufficientDataError(f"need at least {min_points} points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InsufficientDataError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return PowerFit(float(slope), float(intercept), float(r2), int(x.size))


def semilog_fit(k, y, min_points=2) -> PowerFit:
    """Fit ``log y = slope * k + intercept`` (geometric decay per index)."""
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    if k.size < min_points:
        raise InsufficientDataError(f"need at least {min_points} points, got {k.size}")
    if np.any(y <= 0):
        raise InsufficientDataError("semilog fit needs positive data")
    ly = np.log(y)
    slope, intercept = np.polyfit(k, ly, 1)
    resid = ly - (slope * k + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return PowerFit(float(slope), float(intercept), float(r2), int(k.size))


def fitted_constant(lhs, rhs):
    """Smallest ``C`` with ``lhs <= C * rhs`` over the sample."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    return float(np.max(lhs / rhs))
