"""
Decay-curve models for fitting and their initialization heuristics.

Two models are provided: the stretched exponential ``exp(-(tau/t2)**p)`` and
the OU-noise echo curve ``exp(-4 lambda**2 F(tau, tau_c))``. Both can be
wrapped with a free amplitude and offset for traces with imperfect contrast.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

import numpy as np

from .. import models
from ..errors import DataError
from .solver import CurveModel, FitResult, fit_curve, weighted_cost
from .trace import DecayTrace

LAMBDA_BOUNDS = (1e-4, 1e3)
TAU_C_BOUNDS = (1e-3, 1e4)
T2_BOUNDS = (1e-2, 1e4)
P_BOUNDS = (0.5, 4.0)
AMPLITUDE_BOUNDS = (1e-3, 1e3)
OFFSET_BOUNDS = (-1.0, 1.0)

P_INIT = 1.5
N_TAU_C_CANDIDATES = 7


def _stretched_func(tau, x):
    t2, p = x
    return np.exp(-((tau / t2) ** p))


def _stretched_jac(tau, x):
    t2, p = x
    u = (tau / t2) ** p
    s = np.exp(-u)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(tau > 0, np.log(np.where(tau > 0, tau, 1.0) / t2), 0.0)
    return np.column_stack([s * u * p / t2, -s * u * log_ratio])


def _noise_func(tau, x):
    lam, tau_c = x
    return np.exp(-4.0 * lam ** 2 * models.echo_filter_integral(tau, tau_c))


def _noise_jac(tau, x):
    lam, tau_c = x
    f = models.echo_filter_integral(tau, tau_c)
    _, df_dtau_c = models.echo_filter_integral_grad(tau, tau_c)
    c = np.exp(-4.0 * lam ** 2 * f)
    return np.column_stack([-8.0 * lam * f * c, -4.0 * lam ** 2 * df_dtau_c * c])


STRETCHED_EXP = CurveModel(
    name="stretched_exp",
    param_names=("t2", "p"),
    units=("us", "1"),
    func=_stretched_func,
    jac=_stretched_jac,
    bounds=(T2_BOUNDS, P_BOUNDS),
)

NOISE_MODEL = CurveModel(
    name="noise_model",
    param_names=("lambda", "tau_c"),
    units=("rad/us", "us"),
    func=_noise_func,
    jac=_noise_jac,
    bounds=(LAMBDA_BOUNDS, TAU_C_BOUNDS),
)


def with_amplitude(model: CurveModel) -> CurveModel:
    """``amplitude * model + offset`` with the two extra parameters appended."""
    k = model.n_params

    def func(tau, x):
        return x[k] * model.func(tau, x[:k]) + x[k + 1]

    def jac(tau, x):
        base = model.func(tau, x[:k])
        return np.column_stack([x[k] * model.jac(tau, x[:k]), base, np.ones_like(base)])

    return CurveModel(
        name=model.name,
        param_names=model.param_names + ("amplitude", "offset"),
        units=model.units + ("1", "1"),
        func=func,
        jac=jac,
        bounds=model.bounds + (AMPLITUDE_BOUNDS, OFFSET_BOUNDS),
    )


def normalize_trace(trace: DecayTrace, normalize: str = "first") -> DecayTrace:
    """Scale a trace so the signal at the smallest tau is 1.

    ``normalize`` is ``"first"`` (divide by the first point) or ``"none"``.
    """
    if normalize == "none":
        return trace
    if normalize != "first":
        raise ValueError(f"unknown normalization {normalize!r}")
    amplitude = trace.signal[0]
    if not amplitude > 0:
        raise DataError("cannot normalize: first signal value is not positive")
    out = trace.scaled(amplitude)
    out.meta["normalized_by"] = repr(float(amplitude))
    return out


def _clip(v, bounds):
    return float(min(max(v, bounds[0]), bounds[1]))


def initial_t2(trace: DecayTrace, p: float = P_INIT) -> float:
    """First tau where the signal crosses 1/e, linearly interpolated.

    When the signal never drops below 1/e, the last point is extrapolated
    along a stretched exponential with exponent ``p``.
    """
    tau, y = trace.tau, trace.signal
    target = math.exp(-1.0)
    below = np.nonzero(y <= target)[0]
    if below.size:
        i = int(below[0])
        if i == 0:
            return float(tau[0]) if tau[0] > 0 else float(tau[1])
        t0, t1, y0, y1 = tau[i - 1], tau[i], y[i - 1], y[i]
        return float(t0 + (y0 - target) * (t1 - t0) / (y0 - y1))
    last = min(max(float(y[-1]), 1e-12), 1.0 - 1e-9)
    return float(tau[-1] / (-math.log(last)) ** (1.0 / p))


def initial_noise_params(trace: DecayTrace, t2_init: Optional[float] = None) -> Tuple[float, float]:
    """Grid-seeded ``(lambda, tau_c)`` start point.

    Tries ``N_TAU_C_CANDIDATES`` log-spaced ``tau_c`` in
    ``[0.01, 100] * t2_init``; for each, lambda is chosen so the model passes
    through 1/e at ``t2_init``. The lowest-cost pair wins (earliest on ties).
    """
    t2 = initial_t2(trace) if t2_init is None else t2_init
    best, best_cost = None, math.inf
    for tau_c in np.geomspace(0.01 * t2, 100.0 * t2, N_TAU_C_CANDIDATES):
        tau_c = _clip(tau_c, TAU_C_BOUNDS)
        f = float(models.echo_filter_integral(t2, tau_c))
        lam = _clip(0.5 / math.sqrt(f), LAMBDA_BOUNDS) if f > 0 else LAMBDA_BOUNDS[1]
        cost = weighted_cost(trace, NOISE_MODEL, (lam, tau_c))
        if cost < best_cost:
            best, best_cost = (lam, tau_c), cost
    return best


def _amplitude_init(trace):
    return [_clip(float(trace.signal[0]), AMPLITUDE_BOUNDS), 0.0]


def fit_stretched_exp(
    trace: DecayTrace,
    normalize: str = "first",
    free_amplitude: bool = False,
    init: Optional[Sequence[float]] = None,
    bounds=None,
) -> FitResult:
    """Fit ``exp(-(tau/t2)**p)``; params are ``(t2, p)`` [+ amplitude, offset]."""
    trace.require_points()
    data = normalize_trace(trace, normalize)
    model = with_amplitude(STRETCHED_EXP) if free_amplitude else STRETCHED_EXP
    if init is None:
        init = [_clip(initial_t2(data), T2_BOUNDS), P_INIT]
        if free_amplitude:
            init += _amplitude_init(data)
    return fit_curve(data, model, init, bounds)


def fit_noise_model(
    trace: DecayTrace,
    normalize: str = "first",
    free_amplitude: bool = False,
    init: Optional[Sequence[float]] = None,
    bounds=None,
) -> FitResult:
    """Fit the OU-noise echo curve; params are ``(lambda, tau_c)`` [+ amplitude, offset]."""
    trace.require_points()
    data = normalize_trace(trace, normalize)
    model = with_amplitude(NOISE_MODEL) if free_amplitude else NOISE_MODEL
    if init is None:
        init = list(initial_noise_params(data))
        if free_amplitude:
            init += _amplitude_init(data)
    return fit_curve(data, model, init, bounds)


FITTERS = {
    "stretched_exp": fit_stretched_exp,
    "noise_model": fit_noise_model,
}
