"""Yaw-rate smoothing and mean normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WindowTooLarge

DEFAULT_SMOOTHING_S = 0.5


@dataclass(frozen=True)
class NormalizationParams:
    mean: float
    min: float
    max: float

    def __post_init__(self):
        if not self.max >= self.min:
            raise ValueError("max must be >= min")

    @property
    def range(self) -> float:
        return self.max - self.min

    def apply(self, signal) -> np.ndarray:
        x = np.asarray(signal, dtype=np.float64)
        if self.range == 0:
            return np.zeros_like(x)
        return (x - self.mean) / self.range


def default_window_len(sample_rate_hz: float, seconds: float = DEFAULT_SMOOTHING_S) -> int:
    return max(1, int(round(seconds * sample_rate_hz)))


def moving_average(signal, window_len: int) -> np.ndarray:
    """Centered simple moving average.

    Near the ends the window is truncated to the samples that exist, so each
    output is the mean of the available neighbours rather than a zero-padded
    average. Even window lengths put the extra sample on the left.
    """
    x = np.asarray(signal, dtype=np.float64)
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    if window_len > x.size:
        raise WindowTooLarge(f"window of {window_len} samples exceeds signal length {x.size}")
    if window_len == 1:
        return x.copy()
    left = window_len // 2
    right = window_len - left - 1
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def normalize(signal) -> tuple[np.ndarray, NormalizationParams]:
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot normalize an empty signal")
    params = NormalizationParams(float(x.mean()), float(x.min()), float(x.max()))
    return params.apply(x), params


def prepare_gyro(gyro, sample_rate_hz: float, window_len: int | None = None):
    """Smooth then normalize a raw yaw-rate channel; returns (smoothed, normalized, params)."""
    gyro = np.asarray(gyro, dtype=np.float64)
    if window_len is None:
        window_len = default_window_len(sample_rate_hz)
    window_len = min(window_len, gyro.size)
    smoothed = moving_average(gyro, window_len)
    normed, params = normalize(smoothed)
    return smoothed, normed, params
