"""End-to-end labelling of a trip: smoothing, segmentation, heuristics, classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import segment_features
from .heuristics import HeuristicConfig, classify_non_event, split_by_speed
from .models import classify_features
from .preprocess import default_window_len, prepare_gyro
from .segmentation import EmaConfig, ema_segment, fixed_window_segments, gaps, noise_floor
from .telemetry import EVENT_CLASSES, LabeledEvent, ManeuverLabel, Segment, TelemetryTrip

# stopped or moving stretches shorter than this are merged into their neighbour
MIN_SPEED_RUN_S = 1.0


@dataclass(frozen=True)
class SegmentedTrip:
    signal: np.ndarray  # smoothed, normalized yaw rate
    smoothed: np.ndarray
    events: list[Segment]
    rejected: list[Segment]
    window_len: int


def smoothing_len(trip: TelemetryTrip, smoothing_window_s: float) -> int:
    return min(default_window_len(trip.sample_rate_hz, smoothing_window_s), len(trip))


def segment_trip(
    trip: TelemetryTrip,
    ema: EmaConfig = EmaConfig(),
    smoothing_window_s: float = 0.5,
    fixed_window_s: float | None = None,
) -> SegmentedTrip:
    """Candidate events of one trip, from the energy maximizer or fixed tiling.

    In fixed-window mode a tile counts as an event when its power clears the
    same relative threshold the energy maximizer uses.
    """
    wlen = smoothing_len(trip, smoothing_window_s)
    smoothed, z, _ = prepare_gyro(trip.gyro_z, trip.sample_rate_hz, wlen)
    if fixed_window_s is None:
        res = ema_segment(z, ema, trip.sample_rate_hz, blur_len=wlen)
        return SegmentedTrip(z, smoothed, res.events, res.rejected, wlen)
    tiles = fixed_window_segments(len(trip), fixed_window_s, trip.sample_rate_hz)
    base, _ = noise_floor(z)
    power = np.array([np.mean((z[s.start_idx : s.end_idx] - base) ** 2) for s in tiles])
    floor = ema.event_energy_threshold * float(np.median(power)) if tiles else 0.0
    events = [
        Segment(s.start_idx, s.end_idx, float(p * len(s) / trip.sample_rate_hz))
        for s, p in zip(tiles, power)
        if p > floor
    ]
    return SegmentedTrip(z, smoothed, events, [], wlen)


def _carve(span: Segment, holes: list[Segment]) -> list[Segment]:
    """Split ``span`` around the holes lying inside it, keeping the holes as spans."""
    inner = [h for h in holes if h.start_idx >= span.start_idx and h.end_idx <= span.end_idx]
    out = []
    pos = span.start_idx
    for h in inner:
        if h.start_idx > pos:
            out.append(Segment(pos, h.start_idx))
        out.append(Segment(h.start_idx, h.end_idx))
        pos = h.end_idx
    if pos < span.end_idx:
        out.append(Segment(pos, span.end_idx))
    return out


def non_event_spans(trip: TelemetryTrip, events, rejected, heur: HeuristicConfig) -> list[Segment]:
    """Tile everything outside ``events`` into stopped runs, moving runs and rejects."""
    min_run = max(1, int(round(MIN_SPEED_RUN_S * trip.sample_rate_hz)))
    spans = []
    for gap in gaps(len(trip), events):
        for run in split_by_speed(trip.speed, gap, heur.stop_speed_eps, min_run):
            stopped = np.mean(trip.speed[run.start_idx : run.end_idx] <= heur.stop_speed_eps) > 0.5
            spans.extend([run] if stopped else _carve(run, sorted(rejected)))
    return spans


def label_trip(
    trip: TelemetryTrip,
    models,
    ema: EmaConfig = EmaConfig(),
    heur: HeuristicConfig = HeuristicConfig(),
    smoothing_window_s: float = 0.5,
    fixed_window_s: float | None = None,
) -> list[LabeledEvent]:
    """Label every sample of the trip. Returns spans sorted by start that tile the trip."""
    seg = segment_trip(trip, ema, smoothing_window_s, fixed_window_s)
    # a vehicle at rest cannot be maneuvering
    events = [
        s
        for s in seg.events
        if np.mean(trip.speed[s.start_idx : s.end_idx] <= heur.stop_speed_eps) <= heur.min_stop_fraction
    ]
    out = []
    if events:
        x = segment_features(seg.signal, events)
        for s, (label, conf) in zip(events, classify_features(models, x)):
            out.append(LabeledEvent(s, label, min(max(conf, 0.0), 1.0)))
    mean, std = float(seg.smoothed.mean()), float(seg.smoothed.std())
    for span in non_event_spans(trip, events, seg.rejected, heur):
        label = classify_non_event(trip, span, mean, std, heur, gyro=seg.smoothed)
        out.append(LabeledEvent(span, label))
    return sorted(out, key=lambda e: e.start_idx)


def window_examples(trip: TelemetryTrip, truth_events, window_s: float) -> list[LabeledEvent]:
    """Tiles of the trip that an event covers for at least half their length, with its label."""
    out = []
    for tile in fixed_window_segments(len(trip), window_s, trip.sample_rate_hz):
        for ev in truth_events:
            inter = min(tile.end_idx, ev.end_idx) - max(tile.start_idx, ev.start_idx)
            if 2 * inter >= len(tile):
                out.append(LabeledEvent(tile, ev.label))
                break
    return out


def training_set(
    corpus,
    smoothing_window_s: float = 0.5,
    mirror: bool = False,
    fixed_window_s: float | None = None,
):
    """Resampled examples and class indices for the six event classes.

    Examples are the truth events themselves, or with ``fixed_window_s`` the
    fixed tiles those events dominate.
    """
    xs, ys = [], []
    trips = list(corpus)
    if mirror:
        trips = trips + [(t.negated(), g.mirrored()) for t, g in trips]
    for trip, truth in trips:
        events = [e for e in truth.events if e.label.is_event]
        if fixed_window_s is not None:
            events = window_examples(trip, events, fixed_window_s)
        if not events:
            continue
        _, z, _ = prepare_gyro(trip.gyro_z, trip.sample_rate_hz, smoothing_len(trip, smoothing_window_s))
        xs.append(segment_features(z, [e.segment for e in events]))
        ys.extend(EVENT_CLASSES.index(e.label) for e in events)
    if not xs:
        return np.zeros((0, 50)), np.zeros(0, dtype=np.int64)
    return np.vstack(xs), np.array(ys, dtype=np.int64)


def scored_predictions(labeled):
    """Predictions that take part in scoring; lane keeping is the unscored background."""
    return [e for e in labeled if e.label is not ManeuverLabel.LANE_KEEPING]
