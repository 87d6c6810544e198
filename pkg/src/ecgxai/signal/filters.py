"""ECG cleaning: Butterworth band limiting, Savitzky-Golay detrending, taper."""

from __future__ import annotations

import math

import numpy as np
from scipy import signal as sps

from .types import TimeSeriesInstance

BUTTER_ORDER = 4
LOWPASS_HZ = 50.0
HIGHPASS_HZ = 0.5
SAVGOL_SECONDS = 2.0
SAVGOL_POLYORDER = 3
TUKEY_ALPHA = 0.1
RESCALE = 1e-3


def butterworth_filter(x, order: int, cutoff_hz: float, kind: str, fs_hz: float) -> np.ndarray:
    """Zero-phase Butterworth filter.

    The filter is run forward and backward, so the overall magnitude
    response is the square of the single-pass order-``order`` curve.

    Args:
        x: 1-D signal.
        order: Butterworth order, at least 1.
        cutoff_hz: -3 dB frequency of a single pass, in (0, fs/2).
        kind: ``"low"`` or ``"high"``.
        fs_hz: sampling rate.
    """
    if kind not in ("low", "high"):
        raise ValueError(f"kind must be 'low' or 'high', got {kind!r}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    nyquist = fs_hz / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz")
    x = np.asarray(x, dtype=float)
    sos = sps.butter(order, cutoff_hz, btype=kind, fs=fs_hz, output="sos")
    return sps.sosfiltfilt(sos, x)


def savgol_detrend(x, window: int, polyorder: int) -> np.ndarray:
    """Subtract the Savitzky-Golay smooth (the baseline estimate) from ``x``."""
    x = np.asarray(x, dtype=float)
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if window > x.shape[-1]:
        raise ValueError(f"window {window} longer than signal ({x.shape[-1]} samples)")
    if not 0 <= polyorder < window:
        raise ValueError(f"polyorder must lie in [0, window), got {polyorder}")
    baseline = sps.savgol_filter(x, window, polyorder, mode="interp")
    return x - baseline


def savgol_window(fs_hz: float, n_samples: int, seconds: float = SAVGOL_SECONDS) -> int:
    """Odd window covering ``seconds`` of signal, capped at the signal length."""
    w = int(math.ceil(seconds * fs_hz))
    if w % 2 == 0:
        w += 1
    if w > n_samples:
        w = n_samples if n_samples % 2 == 1 else n_samples - 1
    return w


def taper_zero_mean(x: np.ndarray, alpha: float = TUKEY_ALPHA) -> np.ndarray:
    """Centre and apply a Tukey taper so the result has zero mean and zero endpoints.

    The offset removed is the window-weighted mean, which makes the mean
    of the tapered output exactly zero.
    """
    w = sps.windows.tukey(x.shape[-1], alpha)
    offset = (x * w).sum(axis=-1, keepdims=True) / w.sum()
    return (x - offset) * w


def clean_lead(x: np.ndarray, fs_hz: float) -> np.ndarray:
    """Band limiting plus baseline removal for one lead (no rescale or taper)."""
    y = butterworth_filter(x, BUTTER_ORDER, LOWPASS_HZ, "low", fs_hz)
    y = butterworth_filter(y, BUTTER_ORDER, HIGHPASS_HZ, "high", fs_hz)
    window = savgol_window(fs_hz, y.shape[-1])
    polyorder = min(SAVGOL_POLYORDER, window - 1)
    return savgol_detrend(y, window, polyorder)


def preprocess(raw: TimeSeriesInstance) -> TimeSeriesInstance:
    """Full cleaning chain applied lead by lead.

    Low-pass at 50 Hz, high-pass at 0.5 Hz, Savitzky-Golay detrend
    (2 s window, cubic), rescale by 1e-3, then zero-mean Tukey taper.
    """
    fs = raw.sample_rate_hz
    if fs <= 1.0:
        raise ValueError(f"sample rate must exceed 1 Hz, got {fs}")
    out = np.empty_like(raw.values)
    for i, lead in enumerate(raw.values):
        out[i] = clean_lead(lead, fs)
    out = taper_zero_mean(out * RESCALE)
    return raw.with_values(out)
