"""
Envelope extraction for echo traces with nuclear-spin revivals.

The decay of interest is the monotone envelope; revivals modulate it
periodically. The envelope is taken as the set of windowed local maxima.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import Optional

import numpy as np

from ..errors import DomainError
from .trace import MIN_FIT_POINTS, DecayTrace

logger = logging.getLogger(__name__)

MIN_DETECT_POINTS = 16
# a spectral line must exceed this multiple of the median power in its octave
DETECT_THRESHOLD = 25.0
MAX_SUBHARMONIC = 4
SUBHARMONIC_FRACTION = 0.1


def _prominent(power, k, k_min, threshold):
    """True when bin ``k`` is a local maximum standing ``threshold`` above its surroundings.

    The background is the median power over ``[k/2, 2k]`` with the peak and
    its two neighbours on each side removed, so a smoothly falling spectrum
    (what is left of the decay) never qualifies.
    """
    if k < k_min or k >= power.size - 1:
        return False
    if not (power[k] > power[k - 1] and power[k] >= power[k + 1]):
        return False
    lo, hi = max(1, k // 2), min(power.size, 2 * k + 1)
    background = np.concatenate([power[lo : k - 2], power[k + 3 : hi]])
    return background.size >= 3 and power[k] >= threshold * float(np.median(background))


def detect_revival_period(trace: DecayTrace) -> Optional[float]:
    """Dominant revival period in us, or None when no modulation stands out.

    The trace is resampled onto a uniform grid and a cubic trend is removed,
    which takes out most of the slow decay. Candidate lines are periodogram
    bins that rise ``DETECT_THRESHOLD`` times above the median power of the
    surrounding octave; the strongest wins. Narrow revivals put comparable
    power into every harmonic, so the lowest sub-multiple of that line which
    is itself a candidate with at least ``SUBHARMONIC_FRACTION`` of its power
    is taken as the fundamental.
    """
    n = len(trace)
    if n < MIN_DETECT_POINTS:
        return None
    grid = np.linspace(trace.tau[0], trace.tau[-1], n)
    y = np.interp(grid, trace.tau, trace.signal)
    u = (grid - grid[0]) / (grid[-1] - grid[0]) * 2.0 - 1.0
    y = y - np.polynomial.polynomial.polyval(u, np.polynomial.polynomial.polyfit(u, y, 3))
    power = np.abs(np.fft.rfft(y * np.hanning(n))) ** 2
    # the lowest bins carry what is left of the decay itself
    k_min = 4
    candidates = [k for k in range(k_min, power.size - 1) if _prominent(power, k, k_min, DETECT_THRESHOLD)]
    if not candidates:
        return None
    k = max(candidates, key=lambda j: power[j])
    for m in range(MAX_SUBHARMONIC, 1, -1):
        lo, hi = int(math.floor(k / m)) - 1, int(math.ceil(k / m)) + 1
        sub = [j for j in candidates if lo <= j <= hi and power[j] >= SUBHARMONIC_FRACTION * power[k]]
        if sub:
            k = max(sub, key=lambda j: power[j])
            break
    # parabolic refinement of the peak position on a log-power scale
    a, b, c = np.log(power[k - 1 : k + 2] + 1e-300)
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
    return float((grid[-1] - grid[0]) * n / (n - 1) / (k + shift))


def extract_envelope(trace: DecayTrace, window: Optional[float] = None) -> DecayTrace:
    """Keep the points that are maxima within ``+-window/2``.

    The first point is always kept. Ties inside a window go to the earliest
    point. The last point is kept only when no other point shares its
    window, since a rising edge cut off by the end of the record would
    otherwise pass as a maximum.

    With ``window=None`` the window is the revival period found by
    :func:`detect_revival_period`; if none is found the trace is returned
    unchanged. A window wider than the whole trace keeps only the first point
    and the global maximum, with a warning and ``meta["envelope"] =
    "window_exceeds_span"``.
    """
    trace.require_points(MIN_FIT_POINTS)
    meta = dict(trace.meta)
    if window is None:
        window = detect_revival_period(trace)
        if window is None:
            logger.info("no revivals detected; envelope step skipped")
            out = trace.subset(slice(None))
            out.meta["envelope"] = "none_detected"
            return out
        logger.info("revival period %.6g us used as envelope window", window)
    if not (np.isfinite(window) and window > 0):
        raise DomainError(f"window must be > 0, got {window!r}")

    tau, y = trace.tau, trace.signal
    span = tau[-1] - tau[0]
    if window > span:
        warnings.warn(
            f"envelope window {window:g} us exceeds trace span {span:g} us; "
            "keeping first point and global maximum only",
            stacklevel=2,
        )
        keep = sorted({0, int(np.argmax(y))})
        out = trace.subset(np.array(keep))
        out.meta.update(meta, envelope="window_exceeds_span", envelope_window=repr(float(window)))
        return out

    half = 0.5 * window
    lo = np.searchsorted(tau, tau - half, side="left")
    hi = np.searchsorted(tau, tau + half, side="right")
    keep = [0]
    last = len(tau) - 1
    for i in range(1, len(tau)):
        if i == last and hi[i] - lo[i] > 1:
            continue
        j = lo[i] + int(np.argmax(y[lo[i] : hi[i]]))
        if j == i:
            keep.append(i)
    out = trace.subset(np.array(keep))
    out.meta.update(meta, envelope_window=repr(float(window)))
    return out
