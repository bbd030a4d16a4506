"""Envelope extraction, decay-curve fitting and concentration regressions."""

from .decay import (
    NOISE_MODEL,
    STRETCHED_EXP,
    fit_noise_model,
    fit_stretched_exp,
    initial_noise_params,
    initial_t2,
    normalize_trace,
    with_amplitude,
)
from .envelope import detect_revival_period, extract_envelope
from .regression import RegressionResult, regress_linear
from .solver import CurveModel, FitResult, fit_curve
from .trace import DecayTrace

__all__ = [
    "CurveModel",
    "DecayTrace",
    "FitResult",
    "NOISE_MODEL",
    "RegressionResult",
    "STRETCHED_EXP",
    "detect_revival_period",
    "extract_envelope",
    "fit_curve",
    "fit_noise_model",
    "fit_stretched_exp",
    "initial_noise_params",
    "initial_t2",
    "normalize_trace",
    "regress_linear",
    "with_amplitude",
]
