"""Noise-spectrum estimation: periodogram via the autocorrelation route and
Welch-averaged windowed segments, plus peak normalization and peak finding.

Conventions.  The estimators act on complex baseband series.  Frequencies
are angular and follow the rotating-frame sign convention: a component
exp(-i nu t) appears at axis value +nu, so a demodulated record maps to
absolute frequency carrier + nu.  The density is per unit angular
frequency: sum(psd) * bin_width equals the series variance (Parseval) and
complex white noise of variance sigma^2 sits at the flat level
sigma^2 * dt / (2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "WelchConfig",
    "Spectrum",
    "PeakEstimate",
    "autocorr_spectrum",
    "welch_spectrum",
    "normalize_peak",
    "find_peak",
    "spectrum_to_csv",
]

_MIN_AUTOCORR_SAMPLES = 4096
_WINDOWS = ("blackman", "hann", "rect")
_DETRENDS = ("none", "mean")


@dataclass(frozen=True)
class WelchConfig:
    """Segmenting policy with durations expressed in units of 1/gamma.

    ``overlap`` is the shared duration between consecutive segments, so the
    segment-start stride is segment_length - overlap.
    """

    segment_length: float = 5.0
    overlap: float = 2.0
    window: str = "blackman"
    detrend: str = "mean"
    gamma: float = 1.0

    def __post_init__(self):
        if self.segment_length <= 0 or self.gamma <= 0:
            raise ConfigError("segment_length and gamma must be positive")
        if not 0 <= self.overlap < self.segment_length:
            raise ConfigError("overlap must satisfy 0 <= overlap < segment_length")
        if self.window not in _WINDOWS:
            raise ConfigError(f"unknown window {self.window!r}; use one of {_WINDOWS}")
        if self.detrend not in _DETRENDS:
            raise ConfigError(f"unknown detrend {self.detrend!r}; use one of {_DETRENDS}")

    def segment_samples(self, dt: float) -> int:
        return max(2, int(round(self.segment_length / (self.gamma * dt))))

    def stride_samples(self, dt: float) -> int:
        return max(1, int(round((self.segment_length - self.overlap) / (self.gamma * dt))))


@dataclass
class Spectrum:
    """One-sided PSD on an absolute angular-frequency grid."""

    freqs: np.ndarray
    psd: np.ndarray
    normalization: str = "raw"
    window_meta: WelchConfig | None = None
    n_segments: int = 1

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def to_csv(self, path) -> None:
        spectrum_to_csv(path, self)


@dataclass(frozen=True)
class PeakEstimate:
    omega_peak: float
    height: float
    method: str
    uncertainty: float
    low_confidence: bool = False


def _window_array(name: str, m: int) -> np.ndarray:
    if name == "blackman":
        # classic coefficients 0.42, 0.5, 0.08
        return np.blackman(m)
    if name == "hann":
        return np.hanning(m)
    return np.ones(m)


def _axis_and_order(n: int, dt: float):
    """Angular axis in the exp(-i nu t) |-> +nu convention, ascending."""
    f = np.fft.fftfreq(n, d=dt)
    omega = -2.0 * math.pi * f
    order = np.argsort(omega)
    return omega[order], order


def _periodogram(x: np.ndarray, dt: float, window: np.ndarray) -> np.ndarray:
    xw = x * window
    u = float(np.sum(window**2))
    spec = np.abs(np.fft.fft(xw)) ** 2 * dt / (u * 2.0 * math.pi)
    return spec


def autocorr_spectrum(series, dt: float, carrier_freq: float = 0.0) -> Spectrum:
    """Full-record PSD (Wiener-Khinchin route).

    The transform of the biased autocorrelation estimate equals the
    periodogram bin-for-bin, so the estimate is computed through one FFT of
    the record; resolution is 1/(total duration).
    """
    x = np.asarray(series, dtype=complex)
    if len(x) < _MIN_AUTOCORR_SAMPLES:
        raise ConfigError(
            f"autocorrelation spectrum needs at least {_MIN_AUTOCORR_SAMPLES} samples"
        )
    spec = _periodogram(x, dt, np.ones(len(x)))
    omega, order = _axis_and_order(len(x), dt)
    return Spectrum(freqs=carrier_freq + omega, psd=spec[order], n_segments=1)


def welch_spectrum(series, dt: float, cfg: WelchConfig, carrier_freq: float = 0.0) -> Spectrum:
    """Averaged windowed periodograms over overlapping segments.

    A record exactly one segment long is accepted as the degenerate
    single-periodogram case; anything shorter than one segment, or long
    enough for one segment but not two, is an error.
    """
    x = np.asarray(series, dtype=complex)
    nseg_len = cfg.segment_samples(dt)
    stride = cfg.stride_samples(dt)
    if len(x) < nseg_len:
        raise ConfigError(
            f"record shorter than one segment ({len(x)} samples, segment {nseg_len})"
        )
    if nseg_len < len(x) < nseg_len + stride:
        raise ConfigError(
            "record too short for Welch averaging: need at least two segments "
            f"({len(x)} samples, segment {nseg_len}, stride {stride})"
        )
    n_segments = (len(x) - nseg_len) // stride + 1
    window = _window_array(cfg.window, nseg_len)
    acc = np.zeros(nseg_len)
    for k in range(n_segments):
        seg = x[k * stride : k * stride + nseg_len]
        if cfg.detrend == "mean":
            seg = seg - np.mean(seg)
        acc += _periodogram(seg, dt, window)
    acc /= n_segments
    omega, order = _axis_and_order(nseg_len, dt)
    return Spectrum(
        freqs=carrier_freq + omega,
        psd=acc[order],
        window_meta=cfg,
        n_segments=n_segments,
    )


def normalize_peak(spec: Spectrum) -> Spectrum:
    """Scale so the maximum equals one; idempotent."""
    top = float(np.max(spec.psd))
    if top <= 0.0:
        raise DomainError("cannot peak-normalize an all-zero spectrum")
    return Spectrum(
        freqs=spec.freqs,
        psd=spec.psd / top,
        normalization="peak_normalized",
        window_meta=spec.window_meta,
        n_segments=spec.n_segments,
    )


def find_peak(
    spec: Spectrum,
    band: tuple[float, float] | None = None,
    method: str = "parabolic",
    exclude: list[tuple[float, float]] | None = None,
) -> PeakEstimate:
    """Locate the dominant peak inside a frequency band.

    ``exclude`` removes sub-intervals (e.g. around a coherent drive line)
    from the search.  The parabolic method refines the argmax with a
    three-point log-parabola; its uncertainty comes from the fitted
    curvature scaled down by the number of averaged segments.  A spectrum
    with no usable prominence is flagged low-confidence with an uncertainty
    spanning the band.
    """
    if method not in ("argmax", "parabolic"):
        raise DomainError(f"unknown peak method {method!r}")
    freqs, psd = spec.freqs, spec.psd
    mask = np.ones(len(freqs), dtype=bool)
    if band is not None:
        lo, hi = band
        if lo >= hi:
            raise DomainError("empty search band")
        mask &= (freqs >= lo) & (freqs <= hi)
    if exclude:
        for lo, hi in exclude:
            mask &= ~((freqs >= lo) & (freqs <= hi))
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        raise DomainError("search band contains no frequency bins")
    binw = spec.bin_width
    sub = psd[idx]
    k = idx[int(np.argmax(sub))]
    height = float(psd[k])
    band_lo, band_hi = float(freqs[idx[0]]), float(freqs[idx[-1]])

    median = float(np.median(sub))
    flat = height < 2.0 * max(median, 1e-300)
    if flat:
        center = 0.5 * (band_lo + band_hi)
        return PeakEstimate(
            omega_peak=center,
            height=height,
            method=method,
            uncertainty=0.5 * (band_hi - band_lo),
            low_confidence=True,
        )

    if method == "argmax" or k == 0 or k == len(freqs) - 1:
        return PeakEstimate(
            omega_peak=float(freqs[k]), height=height, method="argmax",
            uncertainty=0.5 * binw,
        )

    ym, y0, yp = psd[k - 1], psd[k], psd[k + 1]
    if ym <= 0 or yp <= 0 or y0 <= 0:
        return PeakEstimate(
            omega_peak=float(freqs[k]), height=height, method="argmax",
            uncertainty=0.5 * binw,
        )
    lm, l0, lp = math.log(ym), math.log(y0), math.log(yp)
    denom = lm - 2.0 * l0 + lp
    if denom >= 0:
        return PeakEstimate(
            omega_peak=float(freqs[k]), height=height, method="argmax",
            uncertainty=0.5 * binw,
        )
    shift = 0.5 * (lm - lp) / denom
    shift = max(-0.5, min(0.5, shift))
    omega = float(freqs[k] + shift * binw)
    curvature = -denom  # positive, in log units per bin^2
    n_avg = max(spec.n_segments, 1)
    sigma = binw * math.sqrt(math.log(2.0) / curvature) / math.sqrt(n_avg)
    return PeakEstimate(omega_peak=omega, height=height, method="parabolic", uncertainty=sigma)


def spectrum_to_csv(path, spec: Spectrum) -> None:
    normalized = 1 if spec.normalization == "peak_normalized" else 0
    window = spec.window_meta.window if spec.window_meta else "rect"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("freq [omega_bar],psd,n_segments,window,normalized_flag\n")
        for f, p in zip(spec.freqs, spec.psd):
            fh.write(f"{f:.17g},{p:.17g},{spec.n_segments},{window},{normalized}\n")
