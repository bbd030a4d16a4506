from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DomainError


@dataclass(frozen=True)
class RegressionResult:
    """Straight-line fit ``y = slope * x + intercept``.

    Standard errors are scaled by the residual variance, so weights only
    need to be relative.
    """

    slope: float
    intercept: float
    r_squared: float
    slope_se: float
    intercept_se: float
    n: int
    weighted: bool = False


def regress_linear(x, y, weights=None) -> RegressionResult:
    """Closed-form ordinary or weighted least-squares line.

    Parameters
    ----------
    x, y : array_like
        At least three points; ``x`` must not be constant.
    weights : array_like, optional
        Positive per-point weights, typically ``1 / sigma**2``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be 1-D arrays of equal length")
    n = x.size
    if n < 3:
        raise DomainError(f"need at least 3 points, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("x and y must be finite")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or not np.all(w > 0):
        raise DomainError("weights must be positive, one per point")

    sw = w.sum()
    xm = (w @ x) / sw
    ym = (w @ y) / sw
    dx = x - xm
    dy = y - ym
    sxx = w @ dx ** 2
    if not sxx > 1e-14 * (w @ x ** 2):
        raise DomainError("x values are all equal; slope undefined")
    slope = (w @ (dx * dy)) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ssr = float(w @ resid ** 2)
    sst = float(w @ dy ** 2)
    r2 = 0.0 if sst == 0 else min(max(1.0 - ssr / sst, 0.0), 1.0)
    s2 = ssr / (n - 2)
    slope_se = math.sqrt(s2 / sxx)
    intercept_se = math.sqrt(s2 * (1.0 / sw + xm ** 2 / sxx))
    return RegressionResult(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        slope_se=slope_se,
        intercept_se=intercept_se,
        n=n,
        weighted=weights is not None,
    )
