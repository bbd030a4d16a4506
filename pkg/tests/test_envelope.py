import math

import numpy as np
import pytest

from nvecho.errors import DataError, DomainError
from nvecho.fitting import DecayTrace, detect_revival_period, extract_envelope


def revival_trace(period=5.0, t_end=60.0, n=1201, decay=10.0):
    tau = np.linspace(0.0, t_end, n)
    env = np.exp(-tau / decay)
    # cos^2(2 pi tau / period) peaks every period / 2
    return DecayTrace(tau, env * (0.5 + 0.5 * np.cos(2 * math.pi * tau / period) ** 2)), env


def test_monotone_trace_unchanged_with_small_window():
    tau = np.linspace(0, 10, 21)
    tr = DecayTrace(tau, np.exp(-tau / 3))
    out = extract_envelope(tr, window=0.4)
    assert np.array_equal(out.tau, tr.tau)


def test_points_on_envelope():
    tr, env = revival_trace()
    out = extract_envelope(tr, window=2.5)
    truth = np.exp(-out.tau / 10.0)
    assert np.all(np.abs(out.signal - truth) / truth < 0.02)
    spacing = np.diff(out.tau)
    assert np.allclose(spacing, 2.5, atol=0.1)
    assert out.tau[0] == 0.0


def test_detected_period_default():
    tr, _ = revival_trace()
    assert detect_revival_period(tr) == pytest.approx(2.5, rel=0.01)
    out = extract_envelope(tr)
    assert float(out.meta["envelope_window"]) == pytest.approx(2.5, rel=0.01)
    assert len(out) < len(tr) / 10


def test_narrow_revivals_pick_fundamental():
    tau = np.linspace(0, 30, 721)
    y = np.exp(-tau / 12) * np.exp(-((np.sin(math.pi * tau / 1.0) / 0.25) ** 2))
    assert detect_revival_period(DecayTrace(tau, y)) == pytest.approx(1.0, rel=0.01)


def test_no_revivals_returns_trace():
    tau = np.linspace(0, 10, 100)
    tr = DecayTrace(tau, np.exp(-tau / 3))
    assert detect_revival_period(tr) is None
    out = extract_envelope(tr)
    assert np.array_equal(out.signal, tr.signal)
    assert out.meta["envelope"] == "none_detected"


def test_window_exceeds_span():
    tau = np.linspace(0, 1, 10)
    y = np.array([0.5, 0.2, 0.9, 0.1, 0.3, 0.2, 0.1, 0.05, 0.4, 0.0])
    with pytest.warns(UserWarning, match="exceeds trace span"):
        out = extract_envelope(DecayTrace(tau, y), window=5.0)
    assert list(out.tau) == [tau[0], tau[2]]
    assert out.meta["envelope"] == "window_exceeds_span"


def test_ties_go_to_earliest():
    tau = np.arange(8, dtype=float)
    y = np.array([1.0, 0.2, 0.5, 0.5, 0.1, 0.3, 0.05, 0.01])
    out = extract_envelope(DecayTrace(tau, y), window=2.0)
    assert 2.0 in out.tau and 3.0 not in out.tau


def test_rising_last_point_dropped():
    tau = np.arange(8, dtype=float)
    y = np.array([1.0, 0.2, 0.6, 0.1, 0.4, 0.05, 0.1, 0.2])
    out = extract_envelope(DecayTrace(tau, y), window=2.0)
    assert 7.0 not in out.tau


def test_too_few_points():
    with pytest.raises(DataError):
        extract_envelope(DecayTrace([0, 1, 2], [1, 0.5, 0.2]), window=1.0)


def test_bad_window():
    tr, _ = revival_trace()
    with pytest.raises(DomainError):
        extract_envelope(tr, window=-1.0)


def test_sigma_and_sample_id_follow():
    tr, _ = revival_trace(n=241)
    tr = DecayTrace(tr.tau, tr.signal, sigma=np.full(len(tr), 0.01), sample_id="No.3")
    out = extract_envelope(tr, window=2.5)
    assert out.sample_id == "No.3" and len(out.sigma) == len(out)
