"""Event matching, precision/recall/F1, duration score and overall accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput
from .telemetry import EVENT_CLASSES, LabeledEvent, ManeuverLabel

DEFAULT_IOU_MIN = 0.3
DEFAULT_DURATION_CLAMP_S = 1.0


@dataclass
class ConfusionCounts:
    tp: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fn: dict = field(default_factory=dict)

    def add(self, kind: str, label: ManeuverLabel, n: int = 1) -> None:
        d = getattr(self, kind)
        d[label] = d.get(label, 0) + n

    def merge(self, other: "ConfusionCounts") -> None:
        for kind in ("tp", "fp", "fn"):
            for label, n in getattr(other, kind).items():
                self.add(kind, label, n)

    def labels(self) -> list[ManeuverLabel]:
        seen = set(self.tp) | set(self.fp) | set(self.fn)
        return [lab for lab in ManeuverLabel if lab in seen]


def safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = safe_div(tp, tp + fp)
    r = safe_div(tp, tp + fn)
    return p, r, safe_div(2 * p * r, p + r)


def duration_error(actual_s: float, predicted_s: float, clamp_s: float = DEFAULT_DURATION_CLAMP_S) -> float:
    d = abs(actual_s - predicted_s)
    return 1.0 if d > clamp_s else d


def duration_score(pairs, clamp_s: float = DEFAULT_DURATION_CLAMP_S) -> float:
    """``1 - mean(e)`` over (actual, predicted) durations; a ``None`` prediction costs 1."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("duration_score needs at least one pair")
    errs = [1.0 if p is None else duration_error(a, p, clamp_s) for a, p in pairs]
    return 1.0 - sum(errs) / len(errs)


def overall_accuracy(f1: float, ds: float) -> float:
    return f1 * ds


def match_events(truth, predicted, iou_min: float = DEFAULT_IOU_MIN):
    """Greedy one-to-one matching by descending IoU.

    Returns ``(pairs, unmatched_predictions)`` where ``pairs`` lists every
    truth event with its matched prediction or ``None``. Equal IoUs go to the
    earlier truth, then to the earlier prediction.
    """
    truth = list(truth)
    predicted = list(predicted)
    cands = []
    for i, t in enumerate(truth):
        for j, p in enumerate(predicted):
            v = t.segment.iou(p.segment)
            if v >= iou_min and v > 0:
                cands.append((-v, t.start_idx, i, p.start_idx, j))
    cands.sort()
    t_used, p_used = {}, set()
    for _, _, i, _, j in cands:
        if i in t_used or j in p_used:
            continue
        t_used[i] = j
        p_used.add(j)
    pairs = [(t, predicted[t_used[i]] if i in t_used else None) for i, t in enumerate(truth)]
    unmatched = [p for j, p in enumerate(predicted) if j not in p_used]
    return pairs, unmatched


def count_matches(pairs, unmatched) -> ConfusionCounts:
    c = ConfusionCounts()
    for t, p in pairs:
        if p is None:
            c.add("fn", t.label)
        elif p.label is t.label:
            c.add("tp", t.label)
        else:
            c.add("fp", p.label)
            c.add("fn", t.label)
    for p in unmatched:
        c.add("fp", p.label)
    return c


@dataclass
class EvaluationReport:
    precision: dict
    recall: dict
    f1: dict
    duration_score: dict
    overall_accuracy: dict
    counts: ConfusionCounts
    matching: list = field(default_factory=list)  # (trip_id, truth, prediction | None)

    @property
    def macro_f1(self) -> float:
        return float(np.mean([self.f1.get(c, 0.0) for c in EVENT_CLASSES]))

    def to_json(self) -> dict:
        per_class = {}
        for lab in ManeuverLabel:
            if lab not in self.f1 and lab not in self.duration_score:
                continue
            per_class[lab.value] = {
                "precision": self.precision.get(lab, 0.0),
                "recall": self.recall.get(lab, 0.0),
                "f1": self.f1.get(lab, 0.0),
                "duration_score": self.duration_score.get(lab),
                "overall_accuracy": self.overall_accuracy.get(lab),
                "tp": self.counts.tp.get(lab, 0),
                "fp": self.counts.fp.get(lab, 0),
                "fn": self.counts.fn.get(lab, 0),
            }
        return {"macro_f1": self.macro_f1, "per_class": per_class}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def table(self) -> str:
        head = f"{'class':<20}{'P':>8}{'R':>8}{'F1':>8}{'DS':>8}{'OA':>8}"
        lines = [head, "-" * len(head)]
        for name, row in self.to_json()["per_class"].items():
            ds = "-" if row["duration_score"] is None else f"{row['duration_score']:.3f}"
            oa = "-" if row["overall_accuracy"] is None else f"{row['overall_accuracy']:.3f}"
            lines.append(
                f"{name:<20}{row['precision']:>8.3f}{row['recall']:>8.3f}{row['f1']:>8.3f}{ds:>8}{oa:>8}"
            )
        lines.append(f"macro-F1 (event classes): {self.macro_f1:.4f}")
        return "\n".join(lines)

    def confusion_csv(self) -> str:
        rows = ["label,tp,fp,fn"]
        for lab in self.counts.labels():
            c = self.counts
            rows.append(f"{lab.value},{c.tp.get(lab, 0)},{c.fp.get(lab, 0)},{c.fn.get(lab, 0)}")
        return "\n".join(rows) + "\n"


def evaluate(
    trips,
    iou_min: float = DEFAULT_IOU_MIN,
    clamp_s: float = DEFAULT_DURATION_CLAMP_S,
    sample_rate_hz: float | dict = 30.0,
) -> EvaluationReport:
    """Score predictions against truth over several trips.

    ``trips`` yields ``(trip_id, truth_events, predicted_events)``.
    Classification counts require label agreement; duration pairs come from a
    label-blind matching so that boundary quality is scored separately from
    the class decision. Counts are pooled over trips before computing ratios.
    """
    counts = ConfusionCounts()
    durations: dict = {}
    matching = []
    for trip_id, truth, predicted in trips:
        sr = sample_rate_hz[trip_id] if isinstance(sample_rate_hz, dict) else sample_rate_hz
        pairs, unmatched = match_events(truth, predicted, iou_min)
        counts.merge(count_matches(pairs, unmatched))
        for t, p in pairs:
            matching.append((trip_id, t, p))
            a = len(t.segment) / sr
            durations.setdefault(t.label, []).append((a, None if p is None else len(p.segment) / sr))
    precision, recall, f1, ds, oa = {}, {}, {}, {}, {}
    for lab in counts.labels():
        p, r, f = precision_recall_f1(counts.tp.get(lab, 0), counts.fp.get(lab, 0), counts.fn.get(lab, 0))
        precision[lab], recall[lab], f1[lab] = p, r, f
    for lab, pairs in durations.items():
        ds[lab] = duration_score(pairs, clamp_s)
        oa[lab] = overall_accuracy(f1.get(lab, 0.0), ds[lab])
    return EvaluationReport(precision, recall, f1, ds, oa, counts, matching)


def macro_f1(y_true, y_pred, classes=EVENT_CLASSES) -> float:
    """Macro-F1 of per-item labels (no temporal matching)."""
    y_true, y_pred = list(y_true), list(y_pred)
    scores = []
    for c in classes:
        tp = sum(t is c and p is c for t, p in zip(y_true, y_pred))
        fp = sum(t is not c and p is c for t, p in zip(y_true, y_pred))
        fn = sum(t is c and p is not c for t, p in zip(y_true, y_pred))
        scores.append(precision_recall_f1(tp, fp, fn)[2])
    return float(np.mean(scores))


def evaluate_segmentation(
    trips,
    iou_min: float = DEFAULT_IOU_MIN,
    clamp_s: float = DEFAULT_DURATION_CLAMP_S,
    sample_rate_hz: float | dict = 30.0,
) -> dict:
    """Boundary quality of unlabeled segments against the six event classes.

    ``trips`` yields ``(trip_id, truth_events, predicted_segments)``. Reports
    per truth class the duration score and detection recall, plus the count
    of segments that matched no truth event.
    """
    durations: dict = {}
    false_pos = 0
    n_pred = 0
    for trip_id, truth, segments in trips:
        sr = sample_rate_hz[trip_id] if isinstance(sample_rate_hz, dict) else sample_rate_hz
        truth = [t for t in truth if t.label.is_event]
        preds = [LabeledEvent(s, ManeuverLabel.ANOMALY) for s in segments]
        n_pred += len(preds)
        pairs, unmatched = match_events(truth, preds, iou_min)
        false_pos += len(unmatched)
        for t, p in pairs:
            a = len(t.segment) / sr
            durations.setdefault(t.label, []).append((a, None if p is None else len(p.segment) / sr))
    per_class = {}
    for lab in EVENT_CLASSES:
        pairs = durations.get(lab)
        if not pairs:
            continue
        per_class[lab.value] = {
            "duration_score": duration_score(pairs, clamp_s),
            "recall": sum(p is not None for _, p in pairs) / len(pairs),
            "n_truth": len(pairs),
        }
    return {"per_class": per_class, "n_predicted": n_pred, "false_positives": false_pos}
