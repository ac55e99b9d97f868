"""Rule-based labels for spans the segmenter did not mark as maneuvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrip
from .preprocess import default_window_len, moving_average
from .telemetry import ManeuverLabel, Segment, TelemetryTrip


@dataclass(frozen=True)
class HeuristicConfig:
    stop_speed_eps: float = 0.3  # m/s treated as standing still
    k_sigma: float = 2.0
    min_stop_fraction: float = 0.8  # share of samples a span-level verdict needs

    def __post_init__(self):
        if self.stop_speed_eps < 0:
            raise ValueError("stop_speed_eps must be >= 0")
        if self.k_sigma <= 0:
            raise ValueError("k_sigma must be > 0")
        if not 0.0 <= self.min_stop_fraction <= 1.0:
            raise ValueError("min_stop_fraction must lie in [0, 1]")


def smoothed_gyro(trip: TelemetryTrip, window_len: int | None = None) -> np.ndarray:
    if window_len is None:
        window_len = default_window_len(trip.sample_rate_hz)
    return moving_average(trip.gyro_z, min(window_len, len(trip)))


def trip_gyro_stats(trip: TelemetryTrip, window_len: int | None = None) -> tuple[float, float]:
    """Mean and population standard deviation of the smoothed yaw rate."""
    if len(trip) == 0:
        raise EmptyTrip("trip has no samples")
    g = smoothed_gyro(trip, window_len)
    return float(g.mean()), float(g.std())


def classify_non_event(
    trip: TelemetryTrip,
    seg: Segment,
    trip_gyro_mean: float,
    trip_gyro_std: float,
    cfg: HeuristicConfig = HeuristicConfig(),
    gyro: np.ndarray | None = None,
) -> ManeuverLabel:
    """Stop, LaneKeeping or Anomaly for one non-event span.

    ``gyro`` is the smoothed yaw rate the trip statistics came from; the raw
    channel is used when it is omitted.
    """
    if trip_gyro_std < 0:
        raise ValueError("trip_gyro_std must be >= 0")
    speed = trip.speed[seg.start_idx : seg.end_idx]
    if np.mean(speed <= cfg.stop_speed_eps) > cfg.min_stop_fraction:
        return ManeuverLabel.STOP
    g = trip.gyro_z if gyro is None else gyro
    g = g[seg.start_idx : seg.end_idx]
    half = cfg.k_sigma * trip_gyro_std
    inside = (g >= trip_gyro_mean - half) & (g <= trip_gyro_mean + half)
    if np.mean(inside) >= cfg.min_stop_fraction:
        return ManeuverLabel.LANE_KEEPING
    return ManeuverLabel.ANOMALY


def split_by_speed(speed, seg: Segment, eps: float, min_run: int = 1) -> list[Segment]:
    """Cut a span into maximal stopped / moving runs. Runs shorter than
    ``min_run`` samples are absorbed by the run before them."""
    v = np.asarray(speed[seg.start_idx : seg.end_idx]) <= eps
    change = np.flatnonzero(v[1:] != v[:-1]) + 1
    bounds = [0, *change.tolist(), v.size]
    runs: list[list[int]] = []
    for a, b in zip(bounds, bounds[1:]):
        if runs and (b - a < min_run or runs[-1][1] - runs[-1][0] < min_run):
            runs[-1][1] = b
        else:
            runs.append([a, b])
    return [Segment(seg.start_idx + a, seg.start_idx + b) for a, b in runs]
