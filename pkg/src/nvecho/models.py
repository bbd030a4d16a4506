"""
Closed-form decoherence model for NV ensembles under Ornstein-Uhlenbeck noise.

The echo decay follows from classical Gaussian noise ``lambda * f(t) * g(t)``
acting on sigma_z, where ``f`` has autocorrelation ``exp(-|t| / tau_c)`` and
``g`` is the Hahn-echo sign function. Everything here is a pure function of
its arguments; coherence is normalized to 1 at ``tau = 0``.

Units: time in us, rates in 1/us, lambda in rad/us, densities in cm^-3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import constants as const
from .errors import DomainError

__all__ = [
    "NoiseModelParams",
    "StretchedExpParams",
    "InstantaneousDiffusionInput",
    "SampleRecord",
    "NonResonantRate",
    "echo_filter_integral",
    "echo_filter_integral_grad",
    "hahn_echo_coherence",
    "short_time_coherence",
    "long_time_coherence",
    "stretched_exp",
    "instantaneous_diffusion_rate",
    "resonant_density",
    "non_resonant_rate",
    "t2_star_from_lambda",
    "dipolar_coupling_scale",
]


@dataclass(frozen=True)
class NoiseModelParams:
    """Noise amplitude ``lam`` (rad/us) and bath correlation time ``tau_c`` (us)."""

    lam: float
    tau_c: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"lambda must be finite and > 0, got {self.lam!r}")
        _check_tau_c(self.tau_c)


@dataclass(frozen=True)
class StretchedExpParams:
    """Coherence time ``t2`` (us) and stretch exponent ``p`` of exp(-(tau/t2)**p)."""

    t2: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.t2) and self.t2 > 0):
            raise DomainError(f"t2 must be finite and > 0, got {self.t2!r}")
        if not (math.isfinite(self.p) and self.p > 0):
            raise DomainError(f"p must be finite and > 0, got {self.p!r}")


@dataclass(frozen=True)
class InstantaneousDiffusionInput:
    """Resonant spin density (cm^-3), g-factors and refocusing flip angle (rad)."""

    n_resonant: float
    g1: float = const.G_NV
    g2: float = const.G_NV
    beta: float = math.pi

    def __post_init__(self):
        if not (math.isfinite(self.n_resonant) and self.n_resonant >= 0):
            raise DomainError(f"n_resonant must be >= 0, got {self.n_resonant!r}")
        for name in ("g1", "g2"):
            g = getattr(self, name)
            if not 1.9 <= g <= 2.1:
                raise DomainError(f"{name} must lie in [1.9, 2.1], got {g!r}")
        if not 0.0 <= self.beta <= math.pi:
            raise DomainError(f"beta must lie in [0, pi], got {self.beta!r}")


@dataclass(frozen=True)
class SampleRecord:
    """One diamond sample. Concentrations in 1e17 cm^-3, dose in 1e16 e/cm^2."""

    id: str
    p1_conc: float
    nv_conc: float
    dose: Optional[float] = None

    def __post_init__(self):
        for name in ("p1_conc", "nv_conc"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be >= 0, got {v!r}")
        if self.dose is not None and not self.dose >= 0:
            raise DomainError(f"dose must be >= 0, got {self.dose!r}")

    @property
    def spin_concentration(self) -> float:
        """P1 + NV concentration, 1e17 cm^-3."""
        return self.p1_conc + self.nv_conc

    @property
    def resonant_concentration(self) -> float:
        return resonant_density(self.nv_conc)

    @property
    def non_resonant_concentration(self) -> float:
        """Spin concentration minus the resonant share, 1e17 cm^-3."""
        return self.spin_concentration - self.resonant_concentration


@dataclass(frozen=True)
class NonResonantRate:
    """Result of ``non_resonant_rate``.

    ``consistent`` is False when the instantaneous-diffusion rate alone
    exceeds the measured decay rate, i.e. ``rate <= 0``.
    """

    rate: float
    consistent: bool

    def __float__(self):
        return self.rate


def _check_tau_c(tau_c):
    if not (math.isfinite(tau_c) and tau_c > 0):
        raise DomainError(f"tau_c must be finite and > 0, got {tau_c!r}")


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(np.isnan(tau)) or np.any(tau < 0):
        raise DomainError("tau must be >= 0")
    return tau


# Taylor coefficients of x - 3 - exp(-x) + 4 exp(-x/2); the k < 3 terms vanish.
_SERIES_ORDER = 26
_SERIES = np.array(
    [(-1) ** k * (4.0 * 2.0 ** -k - 1.0) / math.factorial(k) for k in range(3, _SERIES_ORDER)]
)
_SERIES_CUTOFF = 1.0


def _reduced_filter(x):
    """x - 3 - exp(-x) + 4 exp(-x/2) for x >= 0, accurate near x = 0."""
    out = np.empty_like(x)
    small = x <= _SERIES_CUTOFF
    xs = x[small]
    acc = np.zeros_like(xs)
    for c in _SERIES[::-1]:
        acc = acc * xs + c
    out[small] = acc * xs ** 3
    xl = x[~small]
    out[~small] = xl - 3.0 - np.exp(-xl) + 4.0 * np.exp(-0.5 * xl)
    return out


def _reduced_filter_deriv(x):
    # d/dx of _reduced_filter = (1 - exp(-x/2))**2
    return np.expm1(-0.5 * x) ** 2


def echo_filter_integral(tau, tau_c):
    """Echo-filtered noise correlation integral.

    Returns ``F = tau_c*tau + (-3 - exp(-tau/tau_c) + 4 exp(-tau/(2 tau_c))) tau_c**2``,
    which equals half the double integral of ``exp(-|t1-t2|/tau_c) g(t1) g(t2)``
    over ``[0, tau]**2``. Small ``tau/tau_c`` is evaluated by power series to
    avoid cancellation.

    Parameters
    ----------
    tau : float or array_like
        Total free-evolution time, us.
    tau_c : float
        Correlation time, us.

    Returns
    -------
    float or ndarray
        F in us^2, same shape as ``tau``.
    """
    _check_tau_c(tau_c)
    tau = _check_tau(tau)
    x = np.atleast_1d(tau / tau_c)
    out = tau_c ** 2 * _reduced_filter(x)
    return out.reshape(tau.shape)[()]


def echo_filter_integral_grad(tau, tau_c):
    """Partial derivatives ``(dF/dtau, dF/dtau_c)`` of ``echo_filter_integral``."""
    _check_tau_c(tau_c)
    tau = _check_tau(tau)
    x = np.atleast_1d(tau / tau_c)
    fp = _reduced_filter_deriv(x)
    d_tau = tau_c * fp
    d_tau_c = tau_c * (2.0 * _reduced_filter(x) - x * fp)
    return d_tau.reshape(tau.shape)[()], d_tau_c.reshape(tau.shape)[()]


def hahn_echo_coherence(tau, params: NoiseModelParams):
    """Normalized Hahn-echo coherence ``exp(-4 lambda**2 F(tau, tau_c))``."""
    return np.exp(-4.0 * params.lam ** 2 * echo_filter_integral(tau, params.tau_c))


def short_time_coherence(tau, params: NoiseModelParams):
    """Quasi-static limit (tau << tau_c): ``exp(-lambda**2 tau**3 / (3 tau_c))``."""
    tau = _check_tau(tau)
    return np.exp(-params.lam ** 2 * tau ** 3 / (3.0 * params.tau_c))[()]


def long_time_coherence(tau, params: NoiseModelParams):
    """Motional-narrowing limit (tau >> tau_c): ``exp(-4 lambda**2 tau_c tau)``."""
    tau = _check_tau(tau)
    return np.exp(-4.0 * params.lam ** 2 * params.tau_c * tau)[()]


def stretched_exp(tau, params: StretchedExpParams):
    """``exp(-(tau / t2)**p)``; equals 1/e at ``tau = t2`` for every ``p``."""
    tau = _check_tau(tau)
    return np.exp(-((tau / params.t2) ** params.p))[()]


def instantaneous_diffusion_rate(inp: InstantaneousDiffusionInput) -> float:
    """Instantaneous-diffusion decay rate ``1/T_ID`` in 1/us.

    ``1/T_ID = n * pi/(9 sqrt 3) * mu0 g1 g2 mu_B**2 / hbar * sin(beta/2)**2``
    with the density converted to m^-3 and the result from 1/s to 1/us.
    """
    n_si = inp.n_resonant * const.PER_CM3_TO_PER_M3
    prefactor = math.pi / (9.0 * math.sqrt(3.0))
    coupling = const.MU_0 * inp.g1 * inp.g2 * const.BOHR_MAGNETON ** 2 / const.HBAR
    rate_per_s = n_si * prefactor * coupling * math.sin(inp.beta / 2.0) ** 2
    return rate_per_s * const.PER_S_TO_PER_US


def resonant_density(nv_conc):
    """Density of NV spins resonant with the driven transition: one twelfth.

    Four crystal axes times three 14N hyperfine lines; any density unit.
    """
    if np.any(np.asarray(nv_conc) < 0):
        raise DomainError("nv_conc must be >= 0")
    return nv_conc / 12


def non_resonant_rate(t2: float, t_id: Optional[float] = None) -> NonResonantRate:
    """Decay rate attributed to non-resonant spins, ``1/t2 - 1/t_id`` (1/us).

    ``t_id=None`` means no instantaneous-diffusion correction.
    """
    if not t2 > 0:
        raise DomainError(f"t2 must be > 0, got {t2!r}")
    if t_id is not None and not t_id > 0:
        raise DomainError(f"t_id must be > 0, got {t_id!r}")
    rate = 1.0 / t2 - (0.0 if t_id is None else 1.0 / t_id)
    return NonResonantRate(rate=rate, consistent=rate > 0)


def t2_star_from_lambda(lam: float) -> float:
    """Free-induction dephasing time ``1 / (2 pi lambda)`` in us.

    Applied literally; whether lambda is meant as an angular or a cyclic
    frequency is ambiguous, and with lambda in rad/us the result carries an
    extra factor 1/(2 pi) relative to the angular reading ``1/lambda``.
    """
    if not (math.isfinite(lam) and lam > 0):
        raise DomainError(f"lambda must be finite and > 0, got {lam!r}")
    return 1.0 / (2.0 * math.pi * lam)


def dipolar_coupling_scale(density: float) -> float:
    """Order-of-magnitude electron dipolar coupling at a given density, in kHz.

    Uses the mean inter-spin spacing ``r = density**(-1/3)`` and the
    point-dipole coupling ``mu0 h gamma_e**2 / (4 pi r**3)`` with
    ``gamma_e = 28 GHz/T``. Gives about 52 kHz at 1e18 cm^-3.
    """
    if not (math.isfinite(density) and density > 0):
        raise DomainError(f"density must be > 0, got {density!r}")
    n_si = density * const.PER_CM3_TO_PER_M3
    coupling_hz = const.MU_0 / (4.0 * math.pi) * const.PLANCK * const.GAMMA_E_HZ_PER_T ** 2 * n_si
    return coupling_hz * 1e-3
