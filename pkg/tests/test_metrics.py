import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maneuverseg.errors import EmptyInput
from maneuverseg.metrics import (
    duration_score,
    evaluate,
    match_events,
    overall_accuracy,
    precision_recall_f1,
)
from maneuverseg.telemetry import EVENT_CLASSES, LabeledEvent, ManeuverLabel, Segment

L = ManeuverLabel


def ev(a, b, label=L.RIGHT_TURN):
    return LabeledEvent(Segment(a, b), label)


def test_prf_examples():
    assert precision_recall_f1(8, 2, 2) == pytest.approx((0.8, 0.8, 0.8), abs=1e-12)
    assert precision_recall_f1(5, 0, 0) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(0, 0, 0) == (0.0, 0.0, 0.0)


def test_duration_score_examples():
    assert duration_score([(5.0, 5.0), (3.0, 3.0)]) == 1.0
    assert duration_score([(5.0, 5.5)]) == pytest.approx(0.5, abs=1e-12)
    assert duration_score([(5.0, 7.0)]) == 0.0
    assert duration_score([(5.0, None)]) == 0.0
    with pytest.raises(EmptyInput):
        duration_score([])


def test_overall_accuracy_examples():
    assert overall_accuracy(1.0, 1.0) == 1.0
    assert overall_accuracy(0.9, 0.8) == pytest.approx(0.72, abs=1e-12)
    assert overall_accuracy(0.37, 0.0) == 0.0


def test_match_examples():
    truth = [ev(0, 10), ev(20, 30, L.LEFT_TURN)]
    pairs, un = match_events(truth, truth)
    assert [p for _, p in pairs] == truth and un == []
    pairs, un = match_events(truth, [ev(50, 60), ev(70, 80)])
    assert all(p is None for _, p in pairs) and len(un) == 2
    # two predictions with IoU 0.9 each: the earlier one wins
    t = [ev(0, 100)]
    a, b = ev(0, 90), ev(10, 100)
    pairs, un = match_events(t, [b, a])
    assert pairs[0][1] is a and un == [b]


def test_match_iou_threshold():
    pairs, un = match_events([ev(0, 10)], [ev(7, 17)], iou_min=0.3)
    assert pairs[0][1] is None and len(un) == 1


@given(
    st.lists(st.tuples(st.integers(0, 200), st.integers(1, 40)), max_size=12),
    st.lists(st.tuples(st.integers(0, 200), st.integers(1, 40)), max_size=12),
)
def test_matching_is_one_to_one(ts, ps):
    truth = [ev(a, a + d) for a, d in ts]
    preds = [ev(a, a + d) for a, d in ps]
    pairs, un = match_events(truth, preds)
    matched = [id(p) for _, p in pairs if p is not None]
    assert len(matched) == len(set(matched))
    assert len(matched) + len(un) == len(preds)
    for t, p in pairs:
        if p is not None:
            assert t.segment.iou(p.segment) >= 0.3


def test_label_mismatch_counts():
    rep = evaluate([("t", [ev(0, 30, L.RIGHT_TURN)], [ev(0, 30, L.LEFT_TURN)])], sample_rate_hz=10)
    assert rep.counts.fp == {L.LEFT_TURN: 1}
    assert rep.counts.fn == {L.RIGHT_TURN: 1}
    # the boundaries were perfect even though the class was wrong
    assert rep.duration_score[L.RIGHT_TURN] == 1.0


def test_perfect_corpus_scores_one():
    rng = np.random.default_rng(0)
    trips = []
    for i in range(5):
        events, pos = [], 0
        for lab in rng.choice(list(EVENT_CLASSES), 6):
            pos += int(rng.integers(10, 50))
            n = int(rng.integers(60, 200))
            events.append(ev(pos, pos + n, lab))
            pos += n
        trips.append((f"t{i}", events, list(events)))
    rep = evaluate(trips)
    for lab in rep.f1:
        assert rep.overall_accuracy[lab] == 1.0
    assert rep.macro_f1 == 1.0


def test_report_invariants_and_order_independence():
    rng = np.random.default_rng(1)
    trips = []
    for i in range(6):
        truth = [ev(j * 100, j * 100 + 50, EVENT_CLASSES[int(rng.integers(6))]) for j in range(5)]
        preds = [
            ev(j * 100 + int(rng.integers(-10, 10)) + 10, j * 100 + 55, EVENT_CLASSES[int(rng.integers(6))])
            for j in range(5)
        ]
        trips.append((f"t{i}", truth, preds))
    a = evaluate(trips)
    b = evaluate(list(reversed(trips)))
    assert a.f1 == b.f1
    for lab, ds in a.duration_score.items():
        assert 0.0 <= ds <= 1.0
        assert a.overall_accuracy[lab] == pytest.approx(a.f1.get(lab, 0.0) * ds, abs=1e-12)
    assert "macro-F1" in a.table()
    assert a.confusion_csv().startswith("label,tp,fp,fn")
