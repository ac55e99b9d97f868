"""Telemetry data model: trips, segments, labeled events and their I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTrip,
    MalformedRow,
    NonMonotonicTime,
    OutOfBounds,
)

CSV_HEADER = ("t_s", "gyro_z", "speed")

# non-uniform grids are accepted when every step is within this fraction of the median step
JITTER_TOLERANCE = 0.01


class ManeuverLabel(Enum):
    RIGHT_TURN = "right_turn"
    LEFT_TURN = "left_turn"
    RIGHT_CURVE = "right_curve"
    LEFT_CURVE = "left_curve"
    RIGHT_LANE_CHANGE = "right_lane_change"
    LEFT_LANE_CHANGE = "left_lane_change"
    LANE_KEEPING = "lane_keeping"
    STOP = "stop"
    # heuristic reject, reported apart from the eight maneuver classes
    ANOMALY = "anomaly"

    @property
    def index(self) -> int:
        return _LABEL_ORDER.index(self)

    @property
    def is_event(self) -> bool:
        return self in EVENT_CLASSES

    def mirrored(self) -> "ManeuverLabel":
        return _MIRROR.get(self, self)

    @classmethod
    def from_index(cls, i: int) -> "ManeuverLabel":
        return _LABEL_ORDER[i]


_LABEL_ORDER = list(ManeuverLabel)

# the six classes handled by the trainable models, in class-index order
EVENT_CLASSES = (
    ManeuverLabel.RIGHT_TURN,
    ManeuverLabel.LEFT_TURN,
    ManeuverLabel.RIGHT_CURVE,
    ManeuverLabel.LEFT_CURVE,
    ManeuverLabel.RIGHT_LANE_CHANGE,
    ManeuverLabel.LEFT_LANE_CHANGE,
)
N_EVENT_CLASSES = len(EVENT_CLASSES)

_MIRROR = {
    ManeuverLabel.RIGHT_TURN: ManeuverLabel.LEFT_TURN,
    ManeuverLabel.LEFT_TURN: ManeuverLabel.RIGHT_TURN,
    ManeuverLabel.RIGHT_CURVE: ManeuverLabel.LEFT_CURVE,
    ManeuverLabel.LEFT_CURVE: ManeuverLabel.RIGHT_CURVE,
    ManeuverLabel.RIGHT_LANE_CHANGE: ManeuverLabel.LEFT_LANE_CHANGE,
    ManeuverLabel.LEFT_LANE_CHANGE: ManeuverLabel.RIGHT_LANE_CHANGE,
}


@dataclass(frozen=True, eq=False)
class TelemetryTrip:
    """A continuous recording of yaw rate (rad/s) and speed (m/s) at a fixed rate."""

    trip_id: str
    sample_rate_hz: float
    gyro_z: np.ndarray
    speed: np.ndarray
    start_epoch_s: float = 0.0

    def __post_init__(self):
        gyro = np.array(self.gyro_z, dtype=np.float64)
        speed = np.array(self.speed, dtype=np.float64)
        if gyro.ndim != 1 or speed.ndim != 1:
            raise ValueError("gyro_z and speed must be one-dimensional")
        if gyro.size == 0:
            raise EmptyTrip(f"trip {self.trip_id!r} has no samples")
        if gyro.shape != speed.shape:
            raise ValueError(
                f"gyro_z and speed lengths differ ({gyro.size} != {speed.size})"
            )
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not (np.all(np.isfinite(gyro)) and np.all(np.isfinite(speed))):
            raise MalformedRow(f"trip {self.trip_id!r} contains non-finite values")
        gyro.setflags(write=False)
        speed.setflags(write=False)
        object.__setattr__(self, "gyro_z", gyro)
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.gyro_z.size

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, TelemetryTrip):
            return NotImplemented
        return (
            self.trip_id == other.trip_id
            and self.sample_rate_hz == other.sample_rate_hz
            and self.start_epoch_s == other.start_epoch_s
            and np.array_equal(self.gyro_z, other.gyro_z)
            and np.array_equal(self.speed, other.speed)
        )

    def negated(self) -> "TelemetryTrip":
        """Mirror image of the trip: yaw rate sign flipped, speed unchanged."""
        return TelemetryTrip(
            self.trip_id, self.sample_rate_hz, -self.gyro_z, self.speed, self.start_epoch_s
        )


@dataclass(frozen=True, order=True)
class Segment:
    """Half-open sample interval ``[start_idx, end_idx)``."""

    start_idx: int
    end_idx: int
    peak_energy: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not (0 <= self.start_idx < self.end_idx):
            raise ValueError(f"invalid segment [{self.start_idx}, {self.end_idx})")
        if not self.peak_energy >= 0:
            raise ValueError(f"peak_energy must be >= 0, got {self.peak_energy}")

    def __len__(self) -> int:
        return self.end_idx - self.start_idx

    def duration_s(self, sample_rate_hz: float) -> float:
        return (self.end_idx - self.start_idx) / sample_rate_hz

    def iou(self, other: "Segment") -> float:
        return interval_iou(self.start_idx, self.end_idx, other.start_idx, other.end_idx)

    def to_json(self) -> dict:
        return {
            "start_idx": int(self.start_idx),
            "end_idx": int(self.end_idx),
            "peak_energy": float(self.peak_energy),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Segment":
        return cls(int(obj["start_idx"]), int(obj["end_idx"]), float(obj.get("peak_energy", 0.0)))


def interval_iou(a0, a1, b0, b1) -> float:
    inter = min(a1, b1) - max(a0, b0)
    if inter <= 0:
        return 0.0
    union = (a1 - a0) + (b1 - b0) - inter
    return inter / union


@dataclass(frozen=True)
class LabeledEvent:
    segment: Segment
    label: ManeuverLabel
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        if not isinstance(self.label, ManeuverLabel):
            raise TypeError(f"label must be a ManeuverLabel, got {self.label!r}")

    @property
    def start_idx(self) -> int:
        return self.segment.start_idx

    @property
    def end_idx(self) -> int:
        return self.segment.end_idx

    def to_json(self) -> dict:
        d = self.segment.to_json()
        d["label"] = self.label.value
        d["confidence"] = float(self.confidence)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledEvent":
        return cls(
            Segment.from_json(obj),
            ManeuverLabel(obj["label"]),
            float(obj.get("confidence", 1.0)),
        )


def _parse_float(value: str, lineno: int, column: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise MalformedRow(f"line {lineno}: {column}={value!r} is not numeric") from None
    if not math.isfinite(x):
        raise MalformedRow(f"line {lineno}: {column}={value!r} is not finite")
    return x


def _trip_from_columns(trip_id, t, gyro, speed) -> TelemetryTrip:
    t = np.asarray(t, dtype=np.float64)
    gyro = np.asarray(gyro, dtype=np.float64)
    speed = np.asarray(speed, dtype=np.float64)
    if t.size == 0:
        raise EmptyTrip(f"trip {trip_id!r} has no samples")
    if t.size == 1:
        raise EmptyTrip(f"trip {trip_id!r} has a single sample; sample rate is undefined")
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0)) + 1
        raise NonMonotonicTime(f"trip {trip_id!r}: t_s not strictly increasing at row {bad}")
    step = float(np.median(dt))
    rate = 1.0 / step
    # undo decimal round-off in written timestamps (30.0000000000017 -> 30.0)
    snapped = round(rate, 6)
    if abs(snapped - rate) <= 1e-9 * rate:
        rate = snapped
    if np.all(np.abs(dt - step) <= JITTER_TOLERANCE * step):
        return TelemetryTrip(trip_id, rate, gyro, speed, float(t[0]))
    # resample onto the uniform grid implied by the median step
    n = int(math.floor((t[-1] - t[0]) / step + 1e-9)) + 1
    grid = t[0] + np.arange(n) * step
    return TelemetryTrip(
        trip_id, rate, np.interp(grid, t, gyro), np.interp(grid, t, speed), float(t[0])
    )


def read_trip_csv(path, trip_id: str | None = None) -> TelemetryTrip:
    """Load a ``t_s,gyro_z,speed`` CSV, resampling jittered timestamps to a uniform grid."""
    path = Path(path)
    trip_id = trip_id if trip_id is not None else path.stem
    t, gyro, speed = [], [], []
    with path.open(newline="", encoding="utf-8") as f:
        rows = (line for line in f if not line.startswith("#"))
        reader = csv.reader(rows)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise MalformedRow(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"{path} line {lineno}: expected 3 fields, got {len(row)}")
            t.append(_parse_float(row[0], lineno, "t_s"))
            gyro.append(_parse_float(row[1], lineno, "gyro_z"))
            speed.append(_parse_float(row[2], lineno, "speed"))
    return _trip_from_columns(trip_id, t, gyro, speed)


def read_trip_jsonl(path, trip_id: str | None = None) -> TelemetryTrip:
    path = Path(path)
    trip_id = trip_id if trip_id is not None else path.stem
    t, gyro, speed = [], [], []
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                values = [obj[k] for k in CSV_HEADER]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRow(f"{path} line {lineno}: {exc}") from None
            t.append(_parse_float(values[0], lineno, "t_s"))
            gyro.append(_parse_float(values[1], lineno, "gyro_z"))
            speed.append(_parse_float(values[2], lineno, "speed"))
    return _trip_from_columns(trip_id, t, gyro, speed)


def read_trip(path, trip_id: str | None = None) -> TelemetryTrip:
    if Path(path).suffix.lower() == ".jsonl":
        return read_trip_jsonl(path, trip_id)
    return read_trip_csv(path, trip_id)


def write_trip_csv(trip: TelemetryTrip, path) -> None:
    # repr() gives the shortest string that round-trips a float exactly
    t = trip.start_epoch_s + trip.times()
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        f.write(",".join(CSV_HEADER) + "\n")
        for ti, g, s in zip(t.tolist(), trip.gyro_z.tolist(), trip.speed.tolist()):
            f.write(f"{ti!r},{g!r},{s!r}\n")


def slice_trip(trip: TelemetryTrip, seg: Segment) -> TelemetryTrip:
    if seg.end_idx > len(trip):
        raise OutOfBounds(
            f"segment [{seg.start_idx}, {seg.end_idx}) exceeds trip length {len(trip)}"
        )
    return TelemetryTrip(
        trip.trip_id,
        trip.sample_rate_hz,
        trip.gyro_z[seg.start_idx : seg.end_idx],
        trip.speed[seg.start_idx : seg.end_idx],
        trip.start_epoch_s + seg.start_idx / trip.sample_rate_hz,
    )
