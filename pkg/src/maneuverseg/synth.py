"""Synthetic trips with exact ground truth.

Pulse shapes follow the yaw-rate signatures of each maneuver: a single
half-sine lobe for turns, a flat-topped lobe for curves and a two-lobe
S shape for lane changes. Left maneuvers are exact sign mirrors of right
ones. Pulses are sampled at sample centres, so every sample inside a truth
interval is nonzero and every sample outside it is pure noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import TripTooShort
from .telemetry import (
    EVENT_CLASSES,
    LabeledEvent,
    ManeuverLabel,
    Segment,
    TelemetryTrip,
    read_trip_csv,
    write_trip_csv,
)

L = ManeuverLabel


@dataclass(frozen=True)
class EventTemplate:
    label: ManeuverLabel
    duration_range_s: tuple[float, float]
    amplitude_range: tuple[float, float]
    shape: str  # "half_sine" | "flat_top" | "s_curve"

    def __post_init__(self):
        for lo, hi in (self.duration_range_s, self.amplitude_range):
            if not 0 < lo <= hi:
                raise ValueError(f"invalid range ({lo}, {hi})")
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown pulse shape {self.shape!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.label.value.startswith("right") else -1.0

    def mirrored(self) -> "EventTemplate":
        return replace(self, label=self.label.mirrored())

    def render(self, n_samples: int, amplitude: float) -> np.ndarray:
        return self.sign * amplitude * _SHAPES[self.shape](n_samples)


def _half_sine(n):
    u = (np.arange(n) + 0.5) / n
    return np.sin(np.pi * u)


def _flat_top(n, rise=0.3):
    # half-sine split at its crest with a plateau inserted
    u = (np.arange(n) + 0.5) / n
    ramp = np.minimum(1.0, np.minimum(u, 1.0 - u) / rise)
    return np.sin(0.5 * np.pi * ramp)


def _s_curve(n):
    u = (np.arange(n) + 0.5) / n
    return np.sin(2.0 * np.pi * u)


_SHAPES = {"half_sine": _half_sine, "flat_top": _flat_top, "s_curve": _s_curve}


DEFAULT_TEMPLATES = {
    t.label: t
    for base in (
        EventTemplate(L.RIGHT_TURN, (4.0, 6.0), (0.7, 0.9), "half_sine"),
        EventTemplate(L.RIGHT_CURVE, (4.0, 10.0), (0.4, 0.6), "flat_top"),
        EventTemplate(L.RIGHT_LANE_CHANGE, (3.0, 7.0), (0.25, 0.35), "s_curve"),
    )
    for t in (base, base.mirrored())
}

STOP_DURATION_S = (5.0, 20.0)
STOP_RAMP_S = 4.0
ANOMALY_DURATION_S = 0.2
ANOMALY_AMPLITUDE = (2.0, 3.0)
SPEED_NOISE_SIGMA = 0.2


@dataclass(frozen=True)
class SynthConfig:
    sample_rate_hz: float = 30.0
    trip_len_s: float = 240.0
    events_per_trip: int = 8
    noise_sigma: float = 0.0
    inter_event_gap_min_s: float = 5.0
    stop_probability: float = 0.1
    anomalies_per_trip: int = 0
    adjacent_curve_turn: bool = False
    cruise_speed_range: tuple[float, float] = (12.0, 25.0)
    seed: int = 0

    def __post_init__(self):
        if self.sample_rate_hz <= 0 or self.trip_len_s <= 0:
            raise ValueError("sample_rate_hz and trip_len_s must be positive")
        if self.events_per_trip < 0 or self.anomalies_per_trip < 0:
            raise ValueError("event counts must be >= 0")
        if self.noise_sigma < 0 or self.inter_event_gap_min_s < 0:
            raise ValueError("noise_sigma and inter_event_gap_min_s must be >= 0")
        if not 0.0 <= self.stop_probability <= 1.0:
            raise ValueError("stop_probability must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    events: tuple[LabeledEvent, ...]

    def __post_init__(self):
        ev = self.events
        for a, b in zip(ev, ev[1:]):
            if b.start_idx < a.end_idx:
                raise ValueError("ground-truth events must be sorted and non-overlapping")

    def mirrored(self) -> "GroundTruth":
        return GroundTruth(
            tuple(LabeledEvent(e.segment, e.label.mirrored(), e.confidence) for e in self.events)
        )

    def of_class(self, label: ManeuverLabel) -> list[LabeledEvent]:
        return [e for e in self.events if e.label is label]


def _sample_labels(rng, n):
    return [EVENT_CLASSES[i] for i in rng.integers(0, len(EVENT_CLASSES), size=n)]


def generate_trip(
    cfg: SynthConfig,
    labels=None,
    trip_id: str = "trip",
    templates=None,
) -> tuple[TelemetryTrip, GroundTruth]:
    """Render one trip and its exact ground truth.

    ``labels`` fixes the maneuver sequence; otherwise ``cfg.events_per_trip``
    classes are drawn uniformly. Stops are inserted after each maneuver with
    probability ``cfg.stop_probability``.
    """
    rng = np.random.default_rng(cfg.seed)
    templates = templates or DEFAULT_TEMPLATES
    sr = cfg.sample_rate_hz
    if labels is None:
        labels = _sample_labels(rng, cfg.events_per_trip)
    labels = list(labels)

    # items: (kind, label, n_samples, amplitude); an adjacent pair is one placement unit
    units = []
    for label in labels:
        tpl = templates[label]
        dur = rng.uniform(*tpl.duration_range_s)
        amp = rng.uniform(*tpl.amplitude_range)
        units.append([("event", label, int(round(dur * sr)), amp)])
        if rng.random() < cfg.stop_probability:
            dur = rng.uniform(*STOP_DURATION_S)
            units.append([("stop", L.STOP, int(round(dur * sr)), 0.0)])
    for _ in range(cfg.anomalies_per_trip):
        amp = rng.uniform(*ANOMALY_AMPLITUDE) * rng.choice([-1.0, 1.0])
        units.append([("anomaly", L.ANOMALY, max(1, int(round(ANOMALY_DURATION_S * sr))), amp)])
    if cfg.adjacent_curve_turn:
        direction = "right" if rng.random() < 0.5 else "left"
        curve = templates[L(f"{direction}_curve")]
        turn = templates[L(f"{direction}_turn")]
        units.append(
            [
                ("event", curve.label, int(round(rng.uniform(*curve.duration_range_s) * sr)),
                 rng.uniform(*curve.amplitude_range)),
                ("event", turn.label, int(round(rng.uniform(*turn.duration_range_s) * sr)),
                 rng.uniform(*turn.amplitude_range)),
            ]
        )
    # anomalies and stops interleave with maneuvers in random order
    order = rng.permutation(len(units))
    units = [units[i] for i in order]

    n_total = int(round(cfg.trip_len_s * sr))
    gap = int(np.ceil(cfg.inter_event_gap_min_s * sr))
    ramp = int(round(STOP_RAMP_S * sr))
    widths = [sum(item[2] for item in unit) for unit in units]
    # stops need room for their speed ramps inside the neighbouring gaps
    pads = [ramp if unit[0][0] == "stop" else 0 for unit in units]
    busy = sum(widths) + (len(units) + 1) * gap + 2 * sum(pads)
    if busy > n_total:
        raise TripTooShort(
            f"{len(units)} items need {busy / sr:.1f} s but the trip lasts {cfg.trip_len_s} s"
        )
    slack = n_total - busy
    # split the slack into len(units)+1 random shares
    cuts = np.sort(rng.integers(0, slack + 1, size=len(units)))
    shares = np.diff(np.concatenate(([0], cuts, [slack])))

    gyro = np.zeros(n_total)
    cruise = rng.uniform(*cfg.cruise_speed_range)
    speed = np.full(n_total, cruise)
    events = []
    pos = 0
    for unit, pad, share in zip(units, pads, shares):
        pos += gap + int(share) + pad
        for kind, label, n, amp in unit:
            seg = Segment(pos, pos + n)
            if kind == "event":
                gyro[pos : pos + n] += templates[label].render(n, amp)
            elif kind == "anomaly":
                gyro[pos : pos + n] += amp
            else:
                speed[pos : pos + n] = 0.0
                speed[pos - pad : pos] = np.linspace(cruise, 0.0, pad + 2)[1:-1]
                speed[pos + n : pos + n + pad] = np.linspace(0.0, cruise, pad + 2)[1:-1]
            events.append(LabeledEvent(seg, label))
            pos += n
        pos += pad

    if cfg.noise_sigma > 0:
        gyro += rng.normal(0.0, cfg.noise_sigma, size=n_total)
    moving = speed > 0
    speed[moving] = np.maximum(
        speed[moving] + rng.normal(0.0, SPEED_NOISE_SIGMA, size=int(moving.sum())), 0.5
    )

    trip = TelemetryTrip(trip_id, sr, gyro, speed)
    return trip, GroundTruth(tuple(events))


def balanced_labels(rng, n_trips: int, per_trip: int) -> list[list[ManeuverLabel]]:
    """Deal a shuffled deck with equal class counts (up to remainder) into trips."""
    total = n_trips * per_trip
    deck = [EVENT_CLASSES[i % len(EVENT_CLASSES)] for i in range(total)]
    perm = rng.permutation(total)
    deck = [deck[i] for i in perm]
    return [deck[i * per_trip : (i + 1) * per_trip] for i in range(n_trips)]


def generate_corpus(cfg: SynthConfig, n_trips: int) -> list[tuple[TelemetryTrip, GroundTruth]]:
    if n_trips < 1:
        raise ValueError("n_trips must be >= 1")
    master = np.random.SeedSequence(cfg.seed)
    deck_rng = np.random.default_rng(master.spawn(1)[0])
    labels = balanced_labels(deck_rng, n_trips, cfg.events_per_trip)
    children = master.spawn(n_trips)
    corpus = []
    for i, (child, trip_labels) in enumerate(zip(children, labels)):
        trip_seed = int(child.generate_state(1, dtype=np.uint32)[0])
        trip_cfg = replace(cfg, seed=trip_seed)
        corpus.append(generate_trip(trip_cfg, trip_labels, trip_id=f"trip_{i:04d}"))
    return corpus


def mirror_corpus(corpus):
    return [(trip.negated(), truth.mirrored()) for trip, truth in corpus]


def write_truth_jsonl(corpus, path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for trip, truth in corpus:
            for ev in truth.events:
                rec = {
                    "trip_id": trip.trip_id,
                    "start_idx": ev.start_idx,
                    "end_idx": ev.end_idx,
                    "label": ev.label.value,
                }
                f.write(json.dumps(rec) + "\n")


def read_truth_jsonl(path) -> dict[str, GroundTruth]:
    by_trip: dict[str, list[LabeledEvent]] = {}
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                continue
            ev = LabeledEvent(Segment(obj["start_idx"], obj["end_idx"]), L(obj["label"]))
            by_trip.setdefault(obj["trip_id"], []).append(ev)
    return {
        k: GroundTruth(tuple(sorted(v, key=lambda e: e.start_idx))) for k, v in by_trip.items()
    }


def write_corpus(corpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for trip, _ in corpus:
        write_trip_csv(trip, out / f"{trip.trip_id}.csv")
    write_truth_jsonl(corpus, out / "truth.jsonl")


def read_corpus(corpus_dir) -> list[tuple[TelemetryTrip, GroundTruth]]:
    d = Path(corpus_dir)
    truth = read_truth_jsonl(d / "truth.jsonl")
    corpus = []
    for csv_path in sorted(d.glob("*.csv")):
        trip = read_trip_csv(csv_path)
        corpus.append((trip, truth.get(trip.trip_id, GroundTruth(()))))
    return corpus
