"""Rotating-frame demodulation and bright/dark supermode construction.

A recorded resonator series decomposes as b_j(t) = beta_j0 + A_j(t)
exp(-i delta2 t): a static radiation-pressure displacement plus a slow
complex amplitude in the frame rotating at the drive-difference frequency.
The bright/dark superpositions are A_b = (g1 A1 + g2 A2)/g_b and
A_d = (g1 A2 - g2 A1)/g_b with g_b = sqrt(g1^2 + g2^2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .sde import Trajectory

__all__ = [
    "SlowAmplitudeSeries",
    "estimate_static_offset",
    "demodulate",
    "supermode_transform",
    "inverse_supermode_transform",
    "lowpass_slow",
    "time_avg_amplitude",
    "slow_amplitudes",
]


@dataclass
class SlowAmplitudeSeries:
    """Demodulated slow amplitudes and their supermode combinations."""

    times: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    ab: np.ndarray
    ad: np.ndarray
    beta_offset1: complex
    beta_offset2: complex
    frame_freq: float
    g1: float = 1.0
    g2: float = 1.0

    def norm_mismatch(self) -> float:
        """Max pointwise deviation of |Ab|^2+|Ad|^2 from |A1|^2+|A2|^2 (relative)."""
        lhs = np.abs(self.ab) ** 2 + np.abs(self.ad) ** 2
        rhs = np.abs(self.a1) ** 2 + np.abs(self.a2) ** 2
        scale = np.maximum(rhs, 1e-300)
        return float(np.max(np.abs(lhs - rhs) / scale))

    def save(self, path) -> None:
        from .container import write_slow_series

        write_slow_series(path, self)


def estimate_static_offset(times, series, delta2, t_window=None) -> complex:
    """Static displacement of b_j over a window of >= 10 whole drive periods.

    Projects the window onto the two-component model beta0 + A exp(-i
    delta2 t) (least squares), which separates the displacement from the
    carrier exactly for the stationary ansatz and remains unbiased under
    additive noise.  The window is counted back from the end of the record
    and truncated to an integer period count (with a warning when truncation
    discards samples).
    """
    times = np.asarray(times)
    series = np.asarray(series)
    period = 2.0 * math.pi / delta2
    duration = float(times[-1] - times[0]) if len(times) > 1 else 0.0
    if t_window is None:
        t_window = duration
    t_window = min(t_window, duration)
    n_periods = int(t_window / period)
    if n_periods < 10:
        raise DomainError("offset window must span at least 10 drive periods")
    window = n_periods * period
    if len(times) > 1 and t_window - window > 0.5 * (times[1] - times[0]):
        warnings.warn(
            f"offset window truncated to {n_periods} whole periods", stacklevel=2
        )
    sel = times >= times[-1] - window * (1.0 + 1e-12)
    y = series[sel]
    carrier = np.exp(-1j * delta2 * times[sel])
    m = float(len(y))
    s = complex(np.sum(carrier))
    det = m * m - abs(s) ** 2
    if det <= 1e-9 * m * m:
        # sampling is degenerate with the carrier; the plain mean is all
        # the data can support
        warnings.warn(
            "sampling grid nearly strobes the drive period; static offset and "
            "carrier are not separable",
            stacklevel=2,
        )
        return complex(np.mean(y))
    sy = complex(np.sum(y))
    sc = complex(np.sum(y * np.conj(carrier)))
    return (m * sy - s * sc) / det


def demodulate(times, series, beta_offset, delta2) -> np.ndarray:
    """Slow amplitude A(t) = (b(t) - beta_offset) * exp(+i delta2 t).

    The rotation uses the exact sample times, so arbitrary record strides
    (including strides near integer drive periods) demodulate without
    carrier aliasing.
    """
    times = np.asarray(times)
    series = np.asarray(series)
    return (series - beta_offset) * np.exp(1j * delta2 * times)


def supermode_transform(a1, a2, g1, g2):
    """Bright/dark combinations weighted by the optical couplings."""
    gb = math.hypot(g1, g2)
    if gb == 0.0:
        raise DomainError("supermode transform undefined for g1 = g2 = 0")
    ab = (g1 * np.asarray(a1) + g2 * np.asarray(a2)) / gb
    ad = (g1 * np.asarray(a2) - g2 * np.asarray(a1)) / gb
    return ab, ad


def inverse_supermode_transform(ab, ad, g1, g2):
    gb = math.hypot(g1, g2)
    if gb == 0.0:
        raise DomainError("supermode transform undefined for g1 = g2 = 0")
    a1 = (g1 * np.asarray(ab) - g2 * np.asarray(ad)) / gb
    a2 = (g2 * np.asarray(ab) + g1 * np.asarray(ad)) / gb
    return a1, a2


def lowpass_slow(series, dt, cutoff) -> np.ndarray:
    """Zero-phase 4th-order low-pass for amplitude reporting.

    Never applied before spectral estimation; spectra must keep the raw
    fluctuation content.
    """
    from scipy.signal import butter, filtfilt

    nyq = math.pi / dt
    wn = min(cutoff / nyq, 0.99)
    bcoef, acoef = butter(4, wn)
    return filtfilt(bcoef, acoef, series)


def time_avg_amplitude(times, series, t_start=None) -> float:
    """Arithmetic mean of |A(t)| over samples at t >= t_start."""
    times = np.asarray(times)
    series = np.asarray(series)
    if t_start is None:
        sel = slice(None)
    else:
        sel = times >= t_start
        if not np.any(sel):
            raise DomainError("no samples at or after t_start")
    return float(np.mean(np.abs(series[sel])))


def slow_amplitudes(
    traj: Trajectory, offset_window=None, estimate_offsets: bool = True
) -> SlowAmplitudeSeries:
    """Demodulate a two-resonator trajectory and build its supermodes.

    Offset estimation assumes the record resolves the drive period; for
    coarse (near-period-strobed) records pass ``estimate_offsets=False`` -
    the static displacement then demodulates to a near-DC line of relative
    size beta_j0/|A_j|, which the spectral analysis excludes anyway.
    """
    if traj.b2 is None:
        raise DomainError("slow_amplitudes needs both resonator records")
    p = traj.params
    if estimate_offsets:
        off1 = estimate_static_offset(traj.times, traj.b1, p.delta2, offset_window)
        off2 = estimate_static_offset(traj.times, traj.b2, p.delta2, offset_window)
    else:
        off1 = off2 = 0j
    a1 = demodulate(traj.times, traj.b1, off1, p.delta2)
    a2 = demodulate(traj.times, traj.b2, off2, p.delta2)
    ab, ad = supermode_transform(a1, a2, p.g1, p.g2)
    return SlowAmplitudeSeries(
        times=traj.times,
        a1=a1,
        a2=a2,
        ab=ab,
        ad=ad,
        beta_offset1=off1,
        beta_offset2=off2,
        frame_freq=p.delta2,
        g1=p.g1,
        g2=p.g2,
    )
