from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DataError

MIN_FIT_POINTS = 4


@dataclass(eq=False)
class DecayTrace:
    """Echo signal versus total free-evolution time.

    Attributes
    ----------
    tau : ndarray
        Strictly increasing, non-negative times in us.
    signal : ndarray
        Finite signal values (dimensionless, ideally contrast-normalized).
    sigma : ndarray or None
        Optional positive per-point uncertainties.
    sample_id : str or None
        Link to a sample-table row.
    meta : dict
        Free-form string metadata carried through parsing and writing.
    """

    tau: np.ndarray
    signal: np.ndarray
    sigma: Optional[np.ndarray] = None
    sample_id: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.array(self.tau, dtype=float).reshape(-1)
        self.signal = np.array(self.signal, dtype=float).reshape(-1)
        if self.tau.shape != self.signal.shape:
            raise DataError(f"tau has {self.tau.size} points but signal has {self.signal.size}")
        if not np.all(np.isfinite(self.tau)) or np.any(self.tau < 0):
            raise DataError("tau must be finite and >= 0")
        if self.tau.size > 1 and not np.all(np.diff(self.tau) > 0):
            i = int(np.argmin(np.diff(self.tau) > 0)) + 1
            raise DataError(f"tau is not strictly increasing at point {i}")
        if not np.all(np.isfinite(self.signal)):
            raise DataError("signal must be finite")
        if self.sigma is not None:
            self.sigma = np.array(self.sigma, dtype=float).reshape(-1)
            if self.sigma.shape != self.tau.shape:
                raise DataError("sigma must have one entry per point")
            if not np.all(np.isfinite(self.sigma)) or np.any(self.sigma <= 0):
                raise DataError("sigma must be finite and > 0")
        self.meta = dict(self.meta)

    def __len__(self):
        return self.tau.size

    def __eq__(self, other):
        if not isinstance(other, DecayTrace):
            return NotImplemented
        same_sigma = (self.sigma is None and other.sigma is None) or (
            self.sigma is not None and other.sigma is not None and np.array_equal(self.sigma, other.sigma)
        )
        return (
            np.array_equal(self.tau, other.tau)
            and np.array_equal(self.signal, other.signal)
            and same_sigma
            and self.sample_id == other.sample_id
            and self.meta == other.meta
        )

    def subset(self, index) -> "DecayTrace":
        """Trace restricted to ``index`` (boolean mask or sorted integer indices)."""
        return DecayTrace(
            tau=self.tau[index],
            signal=self.signal[index],
            sigma=None if self.sigma is None else self.sigma[index],
            sample_id=self.sample_id,
            meta=self.meta,
        )

    def scaled(self, factor: float) -> "DecayTrace":
        """Signal and sigma divided by ``factor``."""
        return DecayTrace(
            tau=self.tau,
            signal=self.signal / factor,
            sigma=None if self.sigma is None else self.sigma / factor,
            sample_id=self.sample_id,
            meta=self.meta,
        )

    def require_points(self, n: int = MIN_FIT_POINTS):
        if len(self) < n:
            raise DataError(f"trace has {len(self)} points, at least {n} are required")
