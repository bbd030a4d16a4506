"""
Bounded Levenberg-Marquardt least squares with analytic Jacobians.

The solver minimizes the weighted sum of squared residuals
``sum(((model(tau, x) - y) / sigma)**2)``. Bounds are handled by projecting
each trial step onto the box and freezing parameters that sit on a bound
while the gradient pushes outward.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..errors import DataError, DomainError
from .trace import DecayTrace

logger = logging.getLogger(__name__)

MAX_ITER = 500
XTOL = 1e-8
FTOL = 1e-10
_MU_MAX = 1e32


@dataclass(frozen=True)
class CurveModel:
    """A parameterized curve ``func(tau, x)`` with Jacobian ``jac(tau, x)``.

    ``jac`` returns an array of shape ``(len(tau), len(x))``.
    """

    name: str
    param_names: Tuple[str, ...]
    units: Tuple[str, ...]
    func: Callable
    jac: Callable
    bounds: Tuple[Tuple[float, float], ...]

    @property
    def n_params(self):
        return len(self.param_names)


@dataclass(eq=False)
class FitResult:
    """Outcome of a least-squares fit.

    ``residual_norm`` is the weighted sum of squared residuals at the
    solution; ``covariance`` is ``s**2 (J^T J)^-1`` with the residual
    variance ``s**2 = residual_norm / (n_points - n_params)``.
    """

    model: str
    param_names: Tuple[str, ...]
    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    n_iterations: int
    converged: bool
    units: Tuple[str, ...] = ()
    flags: Tuple[str, ...] = ()
    message: str = ""
    sample_id: Optional[str] = None
    n_points: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.param_names = tuple(self.param_names)
        self.units = tuple(self.units)
        self.flags = tuple(self.flags)
        self.params = np.asarray(self.params, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        k = self.params.size
        if len(self.param_names) != k or self.covariance.shape != (k, k):
            raise DataError("parameter names, values and covariance disagree in size")

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.param_names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.std_errors[self.param_names.index(name)])

    def __eq__(self, other):
        if not isinstance(other, FitResult):
            return NotImplemented
        return (
            self.model == other.model
            and self.param_names == other.param_names
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.covariance, other.covariance, equal_nan=True)
            and self.residual_norm == other.residual_norm
            and self.n_iterations == other.n_iterations
            and self.converged == other.converged
            and self.units == other.units
            and self.flags == other.flags
            and self.message == other.message
            and self.sample_id == other.sample_id
            and self.n_points == other.n_points
            and self.extra == other.extra
        )


def _weights(trace):
    return np.ones(len(trace)) if trace.sigma is None else 1.0 / trace.sigma


def _resid(model, tau, y, w, x):
    r = w * (model.func(tau, x) - y)
    if not np.all(np.isfinite(r)):
        raise DataError(f"non-finite residual for {model.name} at parameters {x.tolist()}")
    return r


def _stationary(g, A, cost, gtol=1e-6):
    # gradient small relative to the curvature scale of each parameter
    scale = np.sqrt(np.maximum(np.diag(A) * max(cost, 1e-300), 1e-300))
    return bool(np.all(np.abs(g) <= gtol * scale))


def weighted_cost(trace: DecayTrace, model: CurveModel, x) -> float:
    """Weighted sum of squared residuals at ``x``."""
    r = _resid(model, trace.tau, trace.signal, _weights(trace), np.asarray(x, dtype=float))
    return float(r @ r)


def fit_curve(
    trace: DecayTrace,
    model: CurveModel,
    init: Sequence[float],
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
    max_iter: int = MAX_ITER,
    xtol: float = XTOL,
    ftol: float = FTOL,
) -> FitResult:
    """Fit ``model`` to ``trace`` by damped Gauss-Newton iterations.

    Converges when an accepted step has relative size below ``xtol`` and the
    relative cost decrease is below ``ftol``. A singular normal matrix at the
    solution leaves ``converged`` False with a diagnostic message; a NaN
    residual raises :class:`DataError`.
    """
    trace.require_points(max(4, model.n_params + 1))
    tau, y, w = trace.tau, trace.signal, _weights(trace)
    bounds = model.bounds if bounds is None else bounds
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x = np.array(init, dtype=float)
    if x.size != model.n_params or lo.size != model.n_params:
        raise DomainError(f"{model.name} takes {model.n_params} parameters")
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError(f"initial parameters {x.tolist()} outside bounds")

    r = _resid(model, tau, y, w, x)
    cost = float(r @ r)
    J = w[:, None] * model.jac(tau, x)
    # cost below this is indistinguishable from an exact fit
    floor = y.size * (1e-15 * max(float(np.max(np.abs(w * y))), 1e-300)) ** 2

    mu = None
    nu = 2.0
    converged = False
    message = "maximum number of iterations reached"
    it = 0
    while it < max_iter:
        it += 1
        A = J.T @ J
        g = J.T @ r
        if mu is None:
            mu = 1e-3 * max(float(np.max(np.diag(A))), 1e-300)
        pinned = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~pinned
        diag = np.diag(A)[free]
        diag = np.maximum(diag, 1e-12 * max(float(np.max(diag, initial=0.0)), 1e-300))
        step = np.zeros_like(x)
        try:
            step[free] = np.linalg.solve(A[np.ix_(free, free)] + mu * np.diag(diag), -g[free])
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        x_new = np.clip(x + step, lo, hi)
        s = x_new - x
        predicted = -(2.0 * g @ s + s @ A @ s)
        if not np.any(s):
            # every free direction is blocked by a bound
            converged = True
            message = "stationary on the bounds"
            break
        if predicted <= 0:
            mu *= nu
            nu *= 2.0
            if mu > _MU_MAX:
                converged = cost <= floor or _stationary(g, A, cost)
                message = "no decrease possible" if converged else "step size collapsed"
                break
            continue
        r_new = _resid(model, tau, y, w, x_new)
        cost_new = float(r_new @ r_new)
        rho = (cost - cost_new) / predicted
        if rho > 0:
            rel_step = float(np.max(np.abs(s) / np.maximum(np.abs(x), 1e-300)))
            rel_cost = (cost - cost_new) / max(cost, floor)
            x, r, cost = x_new, r_new, cost_new
            J = w[:, None] * model.jac(tau, x)
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if (rel_step < xtol and rel_cost < ftol) or cost <= floor:
                converged = True
                message = "converged"
                break
        else:
            mu *= nu
            nu *= 2.0
            if mu > _MU_MAX:
                converged = cost <= floor or _stationary(g, A, cost)
                message = "no decrease possible" if converged else "step size collapsed"
                break

    A = J.T @ J
    m, k = y.size, x.size
    dof = m - k
    s2 = cost / dof if dof > 0 else float("nan")
    scale = np.sqrt(np.diag(A))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(A / np.outer(scale, scale)) if np.all(scale > 0) else np.inf
    if not np.isfinite(cond) or cond > 1e15:
        covariance = np.full((k, k), np.nan)
        converged = False
        message = f"singular normal matrix (condition number {cond:.3g})"
    else:
        covariance = s2 * np.linalg.inv(A)
        covariance = 0.5 * (covariance + covariance.T)
    flags = tuple(
        f"{name}_at_bound"
        for name, v, a, b in zip(model.param_names, x, lo, hi)
        if v <= a or v >= b
    )
    logger.debug("%s fit: %s after %d iterations, cost %.6g", model.name, message, it, cost)
    return FitResult(
        model=model.name,
        param_names=model.param_names,
        params=x,
        covariance=covariance,
        residual_norm=cost,
        n_iterations=it,
        converged=converged,
        units=model.units,
        flags=flags,
        message=message,
        sample_id=trace.sample_id,
        n_points=m,
    )
