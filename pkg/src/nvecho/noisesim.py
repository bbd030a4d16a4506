"""
Monte-Carlo spin-echo dephasing under Ornstein-Uhlenbeck noise.

Independent numerical check of the closed-form echo decay in
:mod:`nvecho.models`. Noise paths are exact AR(1) discretizations of a
unit-variance OU process; the echo phase is a midpoint-rule sum of
``2 lambda f(t) g(t) dt``.

Reproducibility: paths are generated in fixed blocks of ``PATH_BLOCK`` paths.
Block ``b`` draws from a Philox stream keyed by ``(seed, b)``, and path ``i``
is row ``i % PATH_BLOCK`` of block ``i // PATH_BLOCK``. A path therefore
depends only on ``(seed, i, n_steps)``, never on the worker count, and the
final reduction runs over the reassembled array in path order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import DomainError
from .models import NoiseModelParams

__all__ = [
    "SimConfig",
    "McEstimate",
    "ou_path",
    "modulation",
    "echo_phase",
    "echo_coherence_mc",
    "echo_coherence_scan",
    "PATH_BLOCK",
    "MIN_STEPS",
    "MAX_DT_FRACTION",
]

PATH_BLOCK = 4096
# dt <= tau_c * MAX_DT_FRACTION is enforced; dt <= tau / MIN_STEPS is applied
MAX_DT_FRACTION = 1.0 / 20.0
MIN_STEPS = 200
DEFAULT_SEED = 20200220


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo echo experiment.

    ``dt`` is an upper bound on the time step. The step actually used is
    ``tau / n_steps`` with ``n_steps`` the smallest even integer that is at
    least ``max(MIN_STEPS, tau / dt)``, so ``tau`` itself is never rounded and
    the echo pulse falls on a bin edge.
    """

    params: NoiseModelParams
    tau: float
    dt: float
    n_paths: int = 100_000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise DomainError(f"tau must be >= 0, got {self.tau!r}")
        _check_dt(self.dt, self.params.tau_c)
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError(f"n_paths must be a positive integer, got {self.n_paths!r}")

    @property
    def n_steps(self) -> int:
        return _n_steps(self.tau, self.dt)

    @property
    def step(self) -> float:
        """Time step actually used, us."""
        n = self.n_steps
        return self.tau / n if n else self.dt


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo coherence estimate with diagnostics.

    ``imag_mean`` is the path average of sin(phi), zero in expectation;
    ``phase_kurtosis`` is the (non-excess) sample kurtosis of phi, 3 for a
    Gaussian phase, NaN when the phase is identically zero.
    """

    mean: float
    std_error: float
    n_paths: int
    tau: float = 0.0
    n_steps: int = 0
    dt: float = 0.0
    imag_mean: float = 0.0
    phase_kurtosis: float = float("nan")


def _check_dt(dt, tau_c):
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be finite and > 0, got {dt!r}")
    if not (math.isfinite(tau_c) and tau_c > 0):
        raise DomainError(f"tau_c must be finite and > 0, got {tau_c!r}")
    if dt > tau_c * MAX_DT_FRACTION * (1 + 1e-12):
        raise DomainError(
            f"dt={dt:g} us exceeds tau_c/20 = {tau_c * MAX_DT_FRACTION:g} us; "
            "the OU correlation would be under-resolved"
        )


def _n_steps(tau, dt):
    if tau == 0:
        return 0
    n = max(MIN_STEPS, math.ceil(tau / dt * (1 - 1e-12)))
    return n + (n % 2)


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _ou_rows(rng, n_rows, n_steps, ratio):
    """``n_rows`` stationary AR(1) paths of length ``n_steps``; ``ratio = dt / tau_c``."""
    drive = rng.standard_normal((n_rows, n_steps))
    drive[:, 1:] *= math.sqrt(-math.expm1(-2.0 * ratio))
    return lfilter([1.0], [1.0, -math.exp(-ratio)], drive, axis=1)


def ou_path(tau_c: float, dt: float, n_steps: int, seed=None) -> np.ndarray:
    """Stationary unit-variance OU samples ``f_0 .. f_{n_steps-1}`` spaced ``dt``.

    ``f_0 ~ N(0, 1)`` and ``f_{j+1} = a f_j + sqrt(1 - a**2) xi_j`` with
    ``a = exp(-dt / tau_c)``, which reproduces the autocorrelation
    ``exp(-|t| / tau_c)`` exactly on the grid.

    ``seed`` may be an int, a ``numpy.random.Generator`` or None.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be finite and > 0, got {dt!r}")
    if not (math.isfinite(tau_c) and tau_c > 0):
        raise DomainError(f"tau_c must be finite and > 0, got {tau_c!r}")
    if n_steps < 0:
        raise DomainError("n_steps must be >= 0")
    if n_steps == 0:
        return np.empty(0)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _ou_rows(rng, 1, int(n_steps), dt / tau_c)[0]


def modulation(t, tau):
    """Hahn-echo sign function: +1 for ``t <= tau/2``, -1 afterwards."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > tau) or np.any(np.isnan(t)):
        raise DomainError(f"t must lie in [0, {tau}]")
    return np.where(t <= 0.5 * tau, 1.0, -1.0)[()]


def _echo_weights(n_steps, dt, tau):
    # bin midpoints (j + 1/2) dt
    t_mid = (np.arange(n_steps) + 0.5) * dt
    return modulation(t_mid, tau) * dt


def echo_phase(path, config: SimConfig, echo: bool = True):
    """Accumulated relative phase ``2 lambda sum_j f_j g(t_j) dt`` in rad.

    ``path`` holds ``config.n_steps`` samples (or a 2-D array with one path
    per row). With ``echo=False`` the sign flip is dropped, giving the
    free-induction phase.
    """
    path = np.asarray(path, dtype=float)
    n = config.n_steps
    if path.shape[-1] != n:
        raise DomainError(f"path has {path.shape[-1]} samples, config expects {n}")
    if n == 0:
        return np.zeros(path.shape[:-1])[()]
    dt = config.step
    w = _echo_weights(n, dt, config.tau) if echo else np.full(n, dt)
    return (2.0 * config.params.lam * (path @ w))[()]


def _unit_phase_block(seed, block, n_rows, n_steps, ratio, weights):
    rng = _block_rng(seed, block)
    return _ou_rows(rng, n_rows, n_steps, ratio) @ weights


def _unit_phases(tau_c, tau, dt_max, n_paths, seed, workers):
    """Phase per unit lambda, ``sum_j f_j g_j dt``, for every path, in path order."""
    n_steps = _n_steps(tau, dt_max)
    if n_steps == 0:
        return np.zeros(n_paths), 0, dt_max
    dt = tau / n_steps
    ratio = dt / tau_c
    weights = _echo_weights(n_steps, dt, tau)
    blocks = [(b, min(PATH_BLOCK, n_paths - b * PATH_BLOCK)) for b in range(-(-n_paths // PATH_BLOCK))]

    def run(item):
        b, rows = item
        return _unit_phase_block(seed, b, rows, n_steps, ratio, weights)

    if workers is None or workers <= 1 or len(blocks) == 1:
        parts = [run(item) for item in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    return np.concatenate(parts), n_steps, dt


def _estimate(phi, tau, n_steps, dt):
    n = phi.size
    c = np.cos(phi)
    mean = float(np.mean(c))
    std_error = float(np.std(c, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    imag_mean = float(np.mean(np.sin(phi)))
    centered = phi - phi.mean()
    m2 = float(np.mean(centered ** 2))
    kurt = float(np.mean(centered ** 4)) / m2 ** 2 if m2 > 0 else float("nan")
    return McEstimate(
        mean=mean,
        std_error=std_error,
        n_paths=n,
        tau=float(tau),
        n_steps=n_steps,
        dt=float(dt),
        imag_mean=imag_mean,
        phase_kurtosis=kurt,
    )


def echo_coherence_mc(config: SimConfig, workers: Optional[int] = None) -> McEstimate:
    """Monte-Carlo estimate of the normalized echo coherence ``<cos phi>``.

    The result is a deterministic function of ``config``; ``workers`` only
    changes wall time.
    """
    unit, n_steps, dt = _unit_phases(
        config.params.tau_c, config.tau, config.dt, config.n_paths, config.seed, workers
    )
    return _estimate(2.0 * config.params.lam * unit, config.tau, n_steps, dt)


def echo_coherence_scan(
    tau_c: float,
    taus: Sequence[float],
    lambdas: Sequence[float],
    dt: Optional[float] = None,
    n_paths: int = 100_000,
    seed: int = DEFAULT_SEED,
    workers: Optional[int] = None,
):
    """Estimates for every (lambda, tau) pair sharing one ``tau_c``.

    Equivalent to calling :func:`echo_coherence_mc` per pair with the same
    seed (lambda only rescales the phase), but simulates each tau once.
    ``lambda = 0`` is allowed here and yields exactly 1.

    Returns
    -------
    list of list of McEstimate
        Indexed ``[i_lambda][i_tau]``.
    """
    dt = tau_c / 50.0 if dt is None else dt
    _check_dt(dt, tau_c)
    if any(lam < 0 or not math.isfinite(lam) for lam in lambdas):
        raise DomainError("lambda must be finite and >= 0")
    table = [[None] * len(taus) for _ in lambdas]
    for j, tau in enumerate(taus):
        if not (math.isfinite(tau) and tau >= 0):
            raise DomainError(f"tau must be >= 0, got {tau!r}")
        unit, n_steps, step = _unit_phases(tau_c, tau, dt, n_paths, seed, workers)
        for i, lam in enumerate(lambdas):
            table[i][j] = _estimate(2.0 * lam * unit, tau, n_steps, step)
    return table
