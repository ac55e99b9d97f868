"""Per-frame label tracks aligned to a video stream."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import IoFailure, MalformedRow, OverlappingEvents
from .telemetry import LabeledEvent, ManeuverLabel, TelemetryTrip

BACKGROUND = ManeuverLabel.LANE_KEEPING


@dataclass(frozen=True)
class FrameTrack:
    fps: float
    labels: tuple[ManeuverLabel, ...]
    trip_id: str = ""

    def __len__(self) -> int:
        return len(self.labels)

    def runs(self) -> list[tuple[int, int, ManeuverLabel]]:
        """Run-length encoding as half-open ``(start_frame, end_frame, label)``."""
        out = []
        for j, lab in enumerate(self.labels):
            if out and out[-1][2] is lab:
                out[-1] = (out[-1][0], j + 1, lab)
            else:
                out.append((j, j + 1, lab))
        return out


def n_frames(n_samples: int, sample_rate_hz: float, fps: float) -> int:
    return math.ceil(Fraction(n_samples) * Fraction(fps) / Fraction(sample_rate_hz))


def event_frames(start_idx: int, end_idx: int, sample_rate_hz: float, fps: float) -> range:
    """Frames ``j`` whose time ``j / fps`` falls inside the event.

    At video rates at or above the telemetry rate the event is treated as a
    continuous time interval. Below it each frame takes its nearest sample.
    Rational arithmetic keeps boundary frames exact.
    """
    ratio = Fraction(fps) / Fraction(sample_rate_hz)
    if fps >= sample_rate_hz:
        lo, hi = Fraction(start_idx) * ratio, Fraction(end_idx) * ratio
    else:
        half = Fraction(1, 2)
        lo, hi = (start_idx - half) * ratio, (end_idx - half) * ratio
    return range(max(math.ceil(lo), 0), max(math.ceil(hi), 0))


def to_frame_track(trip: TelemetryTrip, events, fps: float) -> FrameTrack:
    if not fps > 0:
        raise ValueError("fps must be positive")
    events = sorted(events, key=lambda e: e.start_idx)
    for a, b in zip(events, events[1:]):
        if b.start_idx < a.end_idx:
            raise OverlappingEvents(
                f"events [{a.start_idx}, {a.end_idx}) and [{b.start_idx}, {b.end_idx}) overlap"
            )
    total = n_frames(len(trip), trip.sample_rate_hz, fps)
    labels = [BACKGROUND] * total
    for ev in events:
        r = event_frames(ev.start_idx, ev.end_idx, trip.sample_rate_hz, fps)
        for j in range(r.start, min(r.stop, total)):
            labels[j] = ev.label
    return FrameTrack(float(fps), tuple(labels), trip.trip_id)


def write_track_csv(track: FrameTrack, path, config_hash: str | None = None) -> None:
    try:
        with Path(path).open("w", encoding="utf-8", newline="") as f:
            if config_hash is not None:
                f.write(f"# config_hash={config_hash} fps={track.fps!r} trip_id={track.trip_id}\n")
            f.write("frame_idx,label\n")
            for j, lab in enumerate(track.labels):
                f.write(f"{j},{lab.value}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write frame track {path}: {exc}") from exc


def read_track_csv(path, fps: float | None = None, trip_id: str | None = None) -> FrameTrack:
    labels = []
    meta = {}
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.update(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
                continue
            if line == "frame_idx,label":
                continue
            idx, _, name = line.partition(",")
            if not idx.isdigit() or int(idx) != len(labels):
                raise MalformedRow(f"{path} line {lineno}: frame index out of sequence")
            try:
                labels.append(ManeuverLabel(name))
            except ValueError:
                raise MalformedRow(f"{path} line {lineno}: unknown label {name!r}") from None
    fps = fps if fps is not None else float(meta.get("fps", 0.0))
    trip_id = trip_id if trip_id is not None else meta.get("trip_id", "")
    return FrameTrack(fps, tuple(labels), trip_id)


def write_track_jsonl(track: FrameTrack, path) -> None:
    try:
        with Path(path).open("w", encoding="utf-8") as f:
            for a, b, lab in track.runs():
                f.write(json.dumps({"start_frame": a, "end_frame": b, "label": lab.value}) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write frame track {path}: {exc}") from exc


def labeled_frame_counts(track: FrameTrack, events: list[LabeledEvent], sample_rate_hz: float):
    """``(frames carrying the event's label inside its range, expected duration * fps)`` per event."""
    out = []
    for ev in events:
        r = event_frames(ev.start_idx, ev.end_idx, sample_rate_hz, track.fps)
        got = sum(1 for j in r if j < len(track) and track.labels[j] is ev.label)
        out.append((got, (ev.end_idx - ev.start_idx) / sample_rate_hz * track.fps))
    return out
